import csv

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from facetrank.corpus import ExtExample
from facetrank.ext import (
    KeywordExtractor,
    TokenScores,
    _example_sentences,
    doc_sentences,
    export_token_heatmap,
    ext_forward,
    pack_ext_input,
    select_keywords,
    word_scores,
)
from facetrank.nn import LossWeights, weighted_bce
from facetrank.text import CLS, PAD, SEP, WordPieceTokenizer


@pytest.fixture(scope="module")
def tok():
    return WordPieceTokenizer.train(["we studied melanoma patients braf mutation status was measured outcomes differ"] * 3, 120)


def test_pack_has_no_separators(tok, braf_doc):
    p = pack_ext_input(doc_sentences(braf_doc), tok, 64)
    assert p.pieces[0] == CLS and SEP not in p.pieces
    assert len(p.ids) == len(p.segments) == len(p.owner)
    # segments alternate per sentence
    sents = doc_sentences(braf_doc)
    seg_of_word = [p.segments[i] for i in p.word_starts]
    want = [k % 2 for k, s in enumerate(sents) for _ in s]
    assert seg_of_word == want


def test_pack_truncation_drops_whole_words(tok):
    p = pack_ext_input([["melanoma"] * 10, ["braf"] * 10], tok, 9)
    assert len(p) <= 9
    assert len(p.words) == len(p.word_starts)
    assert all(p.owner[i] == k for k, i in enumerate(p.word_starts))


def test_select_keywords_rules():
    toks = ["[CLS]", "braf", "melanoma", "braf", "cell"]
    assert select_keywords(TokenScores(toks, [-10.0] * 5)) == []
    assert select_keywords(TokenScores(toks, [5, 5, -5, 5, -5])) == ["braf"]
    assert select_keywords(TokenScores(toks, [0.1] * 5), threshold=0.0) == ["braf", "melanoma", "cell"]
    with pytest.raises(ValueError):
        TokenScores(["a"], [1.0, 2.0])


@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c", "[CLS]", "[PAD]"]), st.floats(-8, 8)), max_size=20),
       st.floats(0.05, 0.95))
def test_select_keywords_properties(pairs, thr):
    toks = [t for t, _ in pairs]
    scores = TokenScores(toks, [s for _, s in pairs])
    out = select_keywords(scores, thr)
    assert set(out) <= set(toks) and len(out) == len(set(out))
    picked = [t for t, v in pairs if 1 / (1 + np.exp(-v)) > thr]
    assert out == sorted(out, key=picked.index)
    assert not {"[CLS]", "[PAD]"} & set(out)
    again = select_keywords(TokenScores(out, [20.0] * len(out)), thr)
    assert again == out


def test_weighted_bce_reduces_to_plain():
    p = torch.tensor([0.2, 0.7, 0.9], dtype=torch.float64)
    y = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    plain = -(torch.log(1 - p[0]) + torch.log(p[1]) + torch.log(1 - p[2])) / 3
    assert float(weighted_bce(p, y, LossWeights(1.0, 1.0))) == pytest.approx(float(plain), abs=1e-12)


def test_heatmap_csv(tmp_path):
    s = TokenScores(["braf", "melanoma", "cell"], [2.0, 0.0, -3.0])
    export_token_heatmap(s, tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["position", "token", "score"]
    assert len(rows) == 4
    vals = [float(r[2]) for r in rows[1:]]
    assert all(0 <= v <= 1 for v in vals)
    assert vals[1] == 0.5


# ------------------------------------------------------------------ estimator


@pytest.fixture(scope="module")
def fitted(ext20):
    return KeywordExtractor(steps=600, val_fraction=0.0, seed=0).fit(ext20)


def _word_probs(est, ex):
    pk = pack_ext_input(_example_sentences(ex), est.tokenizer_, est.max_len)
    ws = word_scores(pk, ext_forward(pk, est.model_).logits)
    return ws, ws.probabilities, np.array(ex.labels[: len(ws.tokens)])


def test_overfit_query_tokens_score_high(fitted, ext20):
    for ex in ext20:
        ws, p, y = _word_probs(fitted, ex)
        if y.any():
            assert p[y].min() > 0.9


def test_forward_shape_and_purity(fitted, ext20):
    pk = pack_ext_input(_example_sentences(ext20[0]), fitted.tokenizer_, fitted.max_len)
    a = ext_forward(pk, fitted.model_)
    assert len(a.logits) == len(pk.pieces)
    assert ext_forward(pk, fitted.model_).logits == a.logits


def test_padding_does_not_change_logits(fitted, ext20):
    from facetrank.ext import collate

    a = pack_ext_input(_example_sentences(ext20[0]), fitted.tokenizer_, 40)
    b = pack_ext_input([["melanoma"]], fitted.tokenizer_, 40)
    ids, seg, mask = collate([a, b])
    with torch.no_grad():
        out = fitted.model_(ids, seg, mask)
    assert np.allclose(out[1, : len(b)].numpy(), ext_forward(b, fitted.model_).logits, atol=1e-5)


def test_transform_returns_keywords(fitted, ext20):
    kws = fitted.transform([ext20[0].doc])[0]
    assert kws and len(kws) == len(set(kws))
    assert set(kws) <= set(ext20[0].tokens)


def test_loss_falls(fitted):
    losses = [r["loss"] for r in fitted.log_]
    assert np.mean(losses[-2:]) < np.mean(losses[:2])


def test_reproducible_and_persistent(ext20, tmp_path):
    a = KeywordExtractor(steps=20, val_fraction=0.0, seed=2, eval_every=10).fit(ext20)
    b = KeywordExtractor(steps=20, val_fraction=0.0, seed=2, eval_every=10).fit(ext20)
    assert [r["loss"] for r in a.log_] == [r["loss"] for r in b.log_]
    a.save(tmp_path / "ext.pt")
    c = KeywordExtractor.load(tmp_path / "ext.pt")
    assert c.score(ext20[1].doc).logits == pytest.approx(a.score(ext20[1].doc).logits, abs=1e-6)


def test_example_validation():
    with pytest.raises(Exception):
        ExtExample(("a", "b"), (True,))
    with pytest.raises(TypeError):
        KeywordExtractor(steps=1).fit(["not an example"])
