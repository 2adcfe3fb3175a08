import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from facetrank.abs import (
    AbsModel,
    BeamRequest,
    DecoderConfig,
    TargetVocab,
    beam_search_batch,
    beam_search_ids,
    coverage_penalty,
    hypothesis_score,
    init_encoder_from_ext,
    length_penalty,
    merge_top_two,
    param_groups,
    read_generations,
    write_generations,
)
from facetrank.corpus import Facet
from facetrank.ext import ExtModel
from facetrank.nn import EncoderConfig, cross_entropy, grad_check
from facetrank.text import N_SPECIAL, SPECIAL_TOKENS
from oracles import exhaustive_decode
from toy import BOS, CANDIDATES, EOS, SOURCE_LEN, toy_abs, toy_score, toy_step

# ------------------------------------------------------------------ penalties


def test_length_penalty_values():
    assert length_penalty(1) == 1.0
    assert abs(length_penalty(5, 0.4) - math.exp(0.4 * math.log(10 / 6))) < 1e-12
    assert length_penalty(5, 0.4) == pytest.approx(1.2267, abs=1e-4)
    with pytest.raises(ValueError):
        length_penalty(0)


@given(st.integers(1, 200), st.floats(0.01, 3.0))
def test_length_penalty_increasing(n, alpha):
    assert length_penalty(n + 1, alpha) > length_penalty(n, alpha)


def test_coverage_penalty_values():
    assert coverage_penalty([[0.6, 0.7], [0.5, 0.3]]) == 0.0
    assert coverage_penalty([[0.5, 1.0]], 0.4) == pytest.approx(0.4 * math.log(0.5), abs=1e-12)
    assert coverage_penalty([[0.0, 1.0]], 1.0) == pytest.approx(math.log(1e-9))
    with pytest.raises(ValueError):
        coverage_penalty([0.5, 0.5])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_coverage_penalty_nonpositive(t, s, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(s), size=t)
    assert coverage_penalty(p) <= 0.0


def test_hypothesis_score_combination():
    att = np.array([[0.5, 0.5], [0.25, 0.75]])
    want = -3.0 / ((5 + 2) / 6) ** 0.4 + 0.4 * math.log(0.75)
    assert hypothesis_score(-3.0, att) == pytest.approx(want, abs=1e-12)


# ------------------------------------------------------------------ beam search


def _beam(seed, beam, max_len=4, scale=0.3):
    m, mem, mask = toy_abs(seed, scale, max_len)
    return beam_search_ids(toy_step(m, mem, mask), BOS, EOS, CANDIDATES, SOURCE_LEN, beam=beam, max_len=max_len)


@pytest.mark.parametrize("seed", [0, 3, 15])
def test_beam_matches_exhaustive(seed):
    m, mem, mask = toy_abs(seed)
    best = _beam(seed, 4)[0]
    score, seq = exhaustive_decode(toy_score(m, mem, mask), BOS, EOS, CANDIDATES, 4)
    assert best.tokens == seq
    assert best.score == pytest.approx(score, abs=1e-9)


def test_full_width_beam_is_exact():
    # 5^4 live slots cover every sequence of length 4
    for seed in (21, 22):
        m, mem, mask = toy_abs(seed, scale=1.0)
        scorer = toy_score(m, mem, mask)
        hyps = _beam(seed, 625, scale=1.0)
        _, seq = exhaustive_decode(scorer, BOS, EOS, CANDIDATES, 4)
        assert hyps[0].tokens == seq


def test_hypothesis_structure():
    for h in _beam(4, 4):
        assert h.tokens[0] == BOS and h.finished
        assert h.tokens[-1] == EOS or h.length == 4
        assert EOS not in h.tokens[1:-1]
        assert h.attention.shape == (h.length, SOURCE_LEN)
        assert np.allclose(h.attention.sum(1), 1.0, atol=1e-9)


def test_returned_hypotheses_ranked():
    hyps = _beam(6, 4)
    assert len(hyps) == 4
    keys = [(-h.score, h.tokens) for h in hyps]
    assert keys == sorted(keys)


def test_scores_are_recomputable():
    m, mem, mask = toy_abs(8)
    scorer = toy_score(m, mem, mask)
    for h in _beam(8, 4):
        assert h.score == pytest.approx(scorer(h.tokens), abs=1e-9)


def test_frontier_local_optimality():
    # finished siblings of returned hypotheses that were not returned score no higher
    m, mem, mask = toy_abs(11)
    scorer = toy_score(m, mem, mask)
    hyps = _beam(11, 2)
    worst = hyps[-1].score
    returned = {tuple(h.tokens) for h in hyps}
    for h in hyps:
        prefix = h.tokens[:-1]
        for c in CANDIDATES:
            sib = prefix + [c]
            if tuple(sib) in returned or (c != EOS and len(sib) - 1 < 4):
                continue
            assert scorer(sib) <= worst + 1e-12


def _greedy_two_pool(scorer, step, max_len=4):
    """Follow the best non-eos token; keep the best eos exit seen on the way."""
    path, best = [BOS], None
    for t in range(1, max_len + 1):
        logp, _ = step([None], [path])
        exits = [path + [EOS]] + ([path + [max(CANDIDATES[:-1], key=lambda c: logp[0][c])]] if t == max_len else [])
        for seq in exits:
            if best is None or scorer(seq) > scorer(best):
                best = seq
        path = path + [max(CANDIDATES[:-1], key=lambda c: (logp[0][c], -c))]
    return best


@pytest.mark.parametrize("seed", range(5))
def test_beam_one_follows_best_token(seed):
    m, mem, mask = toy_abs(seed)
    want = _greedy_two_pool(toy_score(m, mem, mask), toy_step(m, mem, mask))
    assert _beam(seed, 1)[0].tokens == want


def test_batched_search_equals_single():
    models = [toy_abs(s) for s in (1, 2)]
    mems = {k: (mem, mask) for k, (_, mem, mask) in enumerate(models)}
    # both requests share model 0 so one step function can serve them
    m = models[0][0]
    from facetrank.abs import model_step
    step = model_step(m, mems)
    reqs = [BeamRequest(BOS, EOS, CANDIDATES, SOURCE_LEN, k) for k in (0, 1)]
    batched = beam_search_batch(step, reqs, 3, max_len=4)
    for k in (0, 1):
        single = beam_search_batch(step, [reqs[k]], 3, max_len=4)[0]
        assert [h.tokens for h in single] == [h.tokens for h in batched[k]]


def test_beam_rejects_zero():
    m, mem, mask = toy_abs(0)
    with pytest.raises(ValueError):
        beam_search_ids(toy_step(m, mem, mask), BOS, EOS, CANDIDATES, SOURCE_LEN, beam=0)


@settings(max_examples=10)
@given(st.integers(100, 10_000))
def test_beam_matches_exhaustive_property(seed):
    m, mem, mask = toy_abs(seed, max_len=3)
    best = _beam(seed, 4, max_len=3)[0]
    score, _ = exhaustive_decode(toy_score(m, mem, mask), BOS, EOS, CANDIDATES, 3)
    assert best.score == pytest.approx(score, abs=1e-9)


# ------------------------------------------------------------------ model


def _tiny(vocab=12):
    enc = EncoderConfig(vocab_size=20, layers=1, model_dim=8, heads=2, ffn_dim=16, max_positions=12)
    dec = DecoderConfig(vocab, layers=1, model_dim=8, heads=2, ffn_dim=16, decoder_embed_dim=6, max_target_len=5)
    return enc, dec


def test_abs_full_block_gradient():
    torch.manual_seed(0)
    enc, dec = _tiny()
    model = AbsModel(enc, dec).double()
    ids = torch.tensor([[2, 5, 6, 7, 3, 8, 3]])
    tgt = torch.tensor([[4, 9, 10, 11, 9]])

    def loss():
        logits, _ = model(ids, torch.zeros_like(ids), ids != 0, tgt[:, :-1])
        return cross_entropy(logits, tgt[:, 1:])

    assert grad_check(loss, [p for p in model.parameters() if p.requires_grad]) < 1e-3


def test_decoder_is_causal():
    torch.manual_seed(1)
    enc, dec = _tiny()
    model = AbsModel(enc, dec).eval()
    ids = torch.tensor([[2, 5, 6, 3]])
    mem = model.encode(ids, torch.zeros_like(ids), ids != 0)
    a, _ = model.decode(torch.tensor([[4, 9, 10, 11]]), mem, ids != 0)
    b, _ = model.decode(torch.tensor([[4, 9, 7, 8]]), mem, ids != 0)
    assert torch.allclose(a[0, :2], b[0, :2], atol=1e-6)


def test_cross_attention_ignores_source_padding():
    torch.manual_seed(2)
    enc, dec = _tiny()
    model = AbsModel(enc, dec).eval()
    ids = torch.tensor([[2, 5, 6, 3, 0, 0]])
    mem = model.encode(ids, torch.zeros_like(ids), ids != 0)
    _, cross = model.decode(torch.tensor([[4, 9]]), mem, ids != 0)
    assert torch.all(cross[0, :, 4:] == 0)
    assert torch.allclose(cross.sum(-1), torch.ones(1, 2), atol=1e-6)


def test_embedding_matrix_and_freezing():
    enc, dec = _tiny()
    mat = np.arange(12 * 6, dtype=np.float32).reshape(12, 6) / 100
    frozen = AbsModel(enc, dec, mat, freeze_embeddings=True)
    assert np.allclose(frozen.target_embed.weight.detach().numpy(), mat)
    assert not frozen.target_embed.weight.requires_grad
    assert AbsModel(enc, dec, mat, freeze_embeddings=False).target_embed.weight.requires_grad
    with pytest.raises(ValueError):
        AbsModel(enc, dec, mat[:, :5])


def test_config_errors():
    with pytest.raises(ValueError):
        DecoderConfig(10, max_target_len=0)
    with pytest.raises(ValueError):
        DecoderConfig(10, model_dim=10, heads=4)
    enc, _ = _tiny()
    with pytest.raises(ValueError):
        AbsModel(enc, DecoderConfig(10, model_dim=16, heads=2))


def test_encoder_copied_from_extractor():
    torch.manual_seed(3)
    enc, dec = _tiny()
    ext = ExtModel(enc).eval()
    model = AbsModel(enc, dec).eval()
    init_encoder_from_ext(model, ext)
    ids = torch.tensor([[2, 5, 6, 3]])
    seg = torch.zeros_like(ids)
    assert torch.equal(model.encode(ids, seg, ids != 0), ext.encoder(ids, seg, ids != 0))
    wrong = ExtModel(EncoderConfig(vocab_size=21, layers=1, model_dim=8, heads=2, ffn_dim=16, max_positions=12))
    with pytest.raises(ValueError):
        init_encoder_from_ext(model, wrong)


def test_decoder_differs_across_seeds_and_two_lr_groups():
    enc, dec = _tiny()
    torch.manual_seed(0)
    a = AbsModel(enc, dec)
    torch.manual_seed(1)
    b = AbsModel(enc, dec)
    assert not torch.equal(a.project.weight, b.project.weight)
    groups = param_groups(a, 1e-5, 1e-3)
    assert [(g["name"], g["lr"]) for g in groups] == [("encoder", 1e-5), ("decoder", 1e-3)]
    enc_ids = {id(p) for p in a.encoder.parameters()}
    assert all(id(p) in enc_ids for p in groups[0]["params"])
    assert not any(id(p) in enc_ids for p in groups[1]["params"])


# ------------------------------------------------------------------ vocabulary and output


def test_target_vocab():
    v = TargetVocab.build(["melanoma", "braf", "melanoma"], ["emesh_d008545"])
    assert len(v) == N_SPECIAL + 3
    assert v.tokens[:N_SPECIAL] == list(SPECIAL_TOKENS)
    assert v.decode(v.encode(["braf", "melanoma"])) == ["braf", "melanoma"]
    assert v.content_ids == [N_SPECIAL, N_SPECIAL + 1, N_SPECIAL + 2]
    with pytest.raises(KeyError):
        v.encode(["unknown"])
    with pytest.raises(ValueError):
        TargetVocab(["x"] + list(SPECIAL_TOKENS))


def test_merge_top_two():
    assert merge_top_two([["a", "b"], ["b", "c", "a", "d"]]) == ["a", "b", "c", "d"]
    assert merge_top_two([[], []]) == []
    assert merge_top_two([["x"]]) == ["x"]


def test_generation_dump_round_trip(tmp_path):
    rows = [("1", Facet.DISEASE, ["melanoma"]), ("1", Facet.MESH_TERMS, ["emesh_d008545", "emesh_c535533"]),
            ("2", Facet.KEYWORDS, [])]
    write_generations(rows, tmp_path / "g.tsv")
    got = read_generations(tmp_path / "g.tsv")
    assert got["1"][Facet.MESH_TERMS] == ["emesh_d008545", "emesh_c535533"]
    assert got["2"][Facet.KEYWORDS] == []


# ------------------------------------------------------------------ trained generator


@pytest.fixture(scope="module")
def generator(ext20, abs10):
    from facetrank.abs import PseudoQueryGenerator
    from facetrank.ext import KeywordExtractor

    ext = KeywordExtractor(steps=100, val_fraction=0.0, seed=0).fit(ext20)
    return PseudoQueryGenerator(steps=400, val_fraction=0.0, seed=0, max_target_len=12).fit(abs10, extractor=ext)


def test_generator_requires_extractor(abs10):
    from facetrank.abs import PseudoQueryGenerator

    with pytest.raises(ValueError):
        PseudoQueryGenerator(steps=1).fit(abs10)


def test_teacher_forced_loss_nonnegative_and_falling(generator):
    losses = [r["loss"] for r in generator.log_]
    assert min(losses) >= 0
    assert losses[-1] < losses[0]


def test_beam_hypotheses_start_with_facet_bos(generator, abs10):
    for facet in Facet:
        for h in generator.beam_search(abs10[0].doc, facet):
            assert h.tokens[0] == facet.signal.bos_id
            assert h.tokens[-1] == facet.signal.eos_id or h.length == 12


def test_generate_covers_facets(generator, abs10):
    out = generator.transform([abs10[0].doc, abs10[1].doc])
    assert len(out) == 2 and set(out[0]) == set(Facet)
    for toks in out[0].values():
        assert len(toks) == len(set(toks))
        assert not set(toks) & set(SPECIAL_TOKENS)
    one = generator.generate([abs10[0].doc], [Facet.DISEASE])[0]
    assert one[Facet.DISEASE] == out[0][Facet.DISEASE]


def test_cross_attention_export(generator, abs10, tmp_path):
    import csv

    from facetrank.abs import export_cross_attention

    doc = abs10[0].doc
    export_cross_attention(doc, Facet.DISEASE, generator, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    source = rows[0][1:]
    assert len(source) == len(generator._source(doc).ids)
    for r in rows[1:]:
        assert len(r) == len(source) + 1
        assert sum(float(v) for v in r[1:]) == pytest.approx(1.0, abs=1e-5)


def test_facet_signals_change_attention(generator, abs10):
    doc = abs10[0].doc
    _, _, a = generator.cross_attention(doc, Facet.DISEASE)
    _, _, b = generator.cross_attention(doc, Facet.GENETIC_VARIATION)
    n = min(len(a), len(b))
    assert not np.allclose(a[:n], b[:n], atol=1e-4)


def test_generator_round_trip(generator, abs10, tmp_path):
    from facetrank.abs import PseudoQueryGenerator

    generator.save(tmp_path / "abs.pt")
    again = PseudoQueryGenerator.load(tmp_path / "abs.pt")
    assert again.transform([abs10[2].doc]) == generator.transform([abs10[2].doc])
    assert again.perplexity(abs10) == pytest.approx(generator.perplexity(abs10), rel=1e-6)
