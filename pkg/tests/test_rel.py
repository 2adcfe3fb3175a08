import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from facetrank.corpus import Document, RelExample
from facetrank.nn import EncoderConfig
from facetrank.rel import RelClassifier, RelModel, collate, pack_rel_input, rel_rank, rel_score
from facetrank.text import CLS, SEP, WordPieceTokenizer

WORDS = "melanoma braf mutation patients outcome status lung cancer egfr year old male female tumor".split()


@pytest.fixture(scope="module")
def tok():
    return WordPieceTokenizer.train([" ".join(WORDS) + " association between and measured differ studied we"] * 3, 200)


def _doc(n_sent, words=3, i=0):
    sents = [" ".join(WORDS[(i + k + j) % len(WORDS)] for j in range(words)) for k in range(n_sent)]
    return Document(str(i + 1), "", ". ".join(sents) + ".")


def _runs(seq):
    out = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(s)
    return out


def test_segment_pattern_two_sentences_three_queries(tok):
    p = pack_rel_input(_doc(2), ["melanoma", "braf mutation", "64 year old male"], tok, 64)
    assert p.tokens[0] == CLS and p.tokens[-1] == SEP
    assert _runs(p.segments) == [0, 1, 0, 1, 0]
    # document sentences end in SEP; the query block has only the closing one
    assert p.tokens.count(SEP) == 3
    assert p.ids == tok.convert_tokens_to_ids(p.tokens)


def test_truncation_keeps_query(tok):
    query = ["lung cancer", "egfr"]
    p = pack_rel_input(_doc(30, 5), query, tok, 32)
    assert len(p) == 32
    q = [t for s in query for t in tok.tokenize(s)]
    assert p.tokens[-len(q) - 1 : -1] == q


def test_query_alone_too_long(tok):
    with pytest.raises(ValueError):
        pack_rel_input(_doc(1), [" ".join(WORDS)], tok, 8)


@settings(max_examples=40)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(1, 3), st.integers(16, 80))
def test_packing_invariants(n_sent, words, n_query, max_len):
    tok = WordPieceTokenizer.train([" ".join(WORDS)] * 3, 200)
    query = [" ".join(WORDS[q : q + 2]) for q in range(n_query)]
    try:
        p = pack_rel_input(_doc(n_sent, words, n_sent), query, tok, max_len)
    except ValueError:
        assert 2 + sum(len(tok.tokenize(q)) for q in query) > max_len
        return
    assert len(p) <= max_len and p.tokens[0] == CLS and p.tokens[-1] == SEP
    assert len(p.segments) == len(p.tokens)
    runs = _runs(p.segments)
    assert all(a != b for a, b in zip(runs, runs[1:]))
    q = [t for s in query for t in tok.tokenize(s)]
    assert p.tokens[len(p) - len(q) - 1 : -1] == q
    doc_part = list(zip(p.tokens[1 : len(p) - len(q) - 1], p.segments[1 : len(p) - len(q) - 1]))
    for (t, s), (_, nxt) in zip(doc_part, doc_part[1:] + [(None, p.segments[len(p) - len(q) - 1])]):
        if s != nxt:
            assert t == SEP
    assert SEP not in q


def _model(seed=0, vocab=200):
    torch.manual_seed(seed)
    return RelModel(EncoderConfig(vocab_size=vocab, layers=1, model_dim=16, heads=2, ffn_dim=32, max_positions=64))


def test_score_range_and_padding(tok):
    m = _model()
    p = pack_rel_input(_doc(3), ["melanoma"], tok, 64)
    s = rel_score(p, m)
    assert 0.0 <= s <= 1.0
    short = pack_rel_input(_doc(1, i=5), ["lung"], tok, 64)
    ids, seg, mask = collate([p, short])
    with torch.no_grad():
        batched = torch.sigmoid(m(ids, seg, mask))
    assert float(batched[1]) == pytest.approx(rel_score(short, m), abs=1e-6)
    assert float(batched[0]) == pytest.approx(s, abs=1e-6)


# ------------------------------------------------------------------ estimator


@pytest.fixture(scope="module")
def fitted(rel20):
    return RelClassifier(steps=500, val_fraction=0.0, seed=0).fit(rel20)


def test_overfit_separates_training_pairs(fitted, rel20):
    scores = fitted.decision_scores(rel20)
    labels = np.array([e.label for e in rel20])
    assert scores[labels].min() > scores[~labels].max()
    pred = fitted.predict(rel20)
    tp = (pred & labels).sum()
    f1 = 2 * tp / (pred.sum() + labels.sum())
    assert f1 >= 0.95


def test_training_loss_falls(fitted):
    losses = [r["loss"] for r in fitted.log_]
    assert losses[-1] < 0.05
    assert np.mean(losses[-3:]) < np.mean(losses[:3])


def test_rank_contract(fitted, rel20, toy_collection):
    case = toy_collection.topics[0]
    docs = [e.doc for e in rel20][:8]
    ranked = rel_rank(case, docs, fitted)
    ids = ranked.doc_ids
    assert sorted(ids) == sorted({d.id for d in docs})
    assert rel_rank(case, docs[:1], fitted).doc_ids == [docs[0].id]
    # each candidate scored alone gives the same order
    alone = {d.id: float(fitted.decision_scores([(d, case.query_sentences)])[0]) for d in docs}
    assert ids == sorted(alone, key=lambda k: (-alone[k], k))


def test_fixed_seed_reproducible(rel20):
    a = RelClassifier(steps=30, val_fraction=0.0, seed=4).fit(rel20)
    b = RelClassifier(steps=30, val_fraction=0.0, seed=4).fit(rel20)
    assert [r["loss"] for r in a.log_] == [r["loss"] for r in b.log_]


def test_class_weights_change_the_trajectory(rel20):
    imbalanced = rel20[:3] + rel20[10:]
    a = RelClassifier(steps=30, val_fraction=0.0, seed=4, eval_every=10).fit(imbalanced)
    b = RelClassifier(steps=30, val_fraction=0.0, seed=4, eval_every=10, w0=1.0).fit(imbalanced)
    assert [r["loss"] for r in a.log_] != [r["loss"] for r in b.log_]


def test_save_load_round_trip(fitted, rel20, tmp_path):
    fitted.save(tmp_path / "rel.pt")
    again = RelClassifier.load(tmp_path / "rel.pt")
    assert np.allclose(again.decision_scores(rel20), fitted.decision_scores(rel20), atol=1e-7)
    assert again.get_params()["w0"] == 0.15


def test_validation_and_log(rel20, tmp_path):
    est = RelClassifier(steps=20, eval_every=10, seed=1, log_path=tmp_path / "log.csv").fit(rel20)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "step,loss,lr,val_P,val_R,val_F1"
    assert len(lines) == 3
    assert est.step_ == 20


def test_input_validation():
    with pytest.raises((ValueError, TypeError)):
        RelClassifier(steps=1).fit([])
    with pytest.raises(Exception):
        RelClassifier().predict([])
