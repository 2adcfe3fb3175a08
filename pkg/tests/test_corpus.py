import json

import pytest
from hypothesis import given, strategies as st

from facetrank.corpus import (
    AbsExample,
    DataError,
    Document,
    ExtExample,
    Facet,
    PatientCase,
    RankedList,
    RelExample,
    build_training_examples,
    entity_token,
    ext_labels,
    facet_targets,
    load_corpus,
    load_mesh_names,
    load_qrels,
    load_run,
    load_topics,
    run_tag,
    write_corpus,
    write_mesh_names,
    write_qrels,
    write_run,
    write_topics,
)
from facetrank.text import index_tokenize


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_corpus_example_line(tmp_path):
    line = {"id": "28454296", "title": "Association between BRAF v600e...", "abstract": "...",
            "mesh_codes": [], "keywords": []}
    docs = load_corpus(_write(tmp_path / "c.jsonl", json.dumps(line) + "\n"))
    assert [d.id for d in docs] == ["28454296"]


def test_load_corpus_empty_file(tmp_path):
    assert load_corpus(_write(tmp_path / "c.jsonl", "")) == []


def test_load_corpus_duplicate_id(tmp_path):
    rows = "".join(json.dumps({"id": "x", "title": "t", "abstract": "a"}) + "\n" for _ in range(2))
    with pytest.raises(DataError, match="duplicate"):
        load_corpus(_write(tmp_path / "c.jsonl", rows))


def test_load_corpus_malformed_line_names_line(tmp_path):
    text = json.dumps({"id": "1", "title": "t", "abstract": "a"}) + "\n{oops\n"
    with pytest.raises(DataError, match=":2:"):
        load_corpus(_write(tmp_path / "c.jsonl", text))


def test_document_requires_text():
    with pytest.raises(DataError):
        Document("1", " ", "")
    with pytest.raises(DataError):
        Document("", "t", "a")


def test_corpus_round_trip_byte_identical(tmp_path, braf_doc):
    p = tmp_path / "a.jsonl"
    write_corpus([braf_doc, Document("2", "Title", "Body.")], p)
    q = tmp_path / "b.jsonl"
    write_corpus(load_corpus(p), q)
    assert p.read_bytes() == q.read_bytes()


def test_topics_round_trip(tmp_path, braf_case):
    write_topics([braf_case], tmp_path / "t.jsonl")
    assert load_topics(tmp_path / "t.jsonl") == [braf_case]


def test_topics_require_disease_and_gene(tmp_path):
    with pytest.raises(DataError, match=":1:"):
        load_topics(_write(tmp_path / "t.jsonl", json.dumps({"topic_id": 1, "disease": "x", "gene": " "}) + "\n"))


def test_qrels_parse(tmp_path):
    q = load_qrels(_write(tmp_path / "q", "1 0 d7 2\n1 0 d8 1\n2 0 d7 0\n"))
    assert q == {"1": {"d7": 2, "d8": 1}, "2": {"d7": 0}}


@pytest.mark.parametrize("line", ["1 0 d7 5", "1 0 d7 x", "1 0 d7"])
def test_qrels_bad_lines(tmp_path, line):
    with pytest.raises(DataError):
        load_qrels(_write(tmp_path / "q", line + "\n"))


def test_qrels_round_trip(tmp_path):
    q = {"1": {"a": 2, "b": 0}, "2": {"c": 1}}
    write_qrels(q, tmp_path / "q")
    assert load_qrels(tmp_path / "q") == q


def test_run_round_trip(tmp_path):
    runs = [RankedList("1", [("a", 3.0), ("b", 1.5)]), RankedList("2", [("c", 0.25)])]
    write_run(runs, tmp_path / "r", tag="x")
    lines = (tmp_path / "r").read_text().splitlines()
    assert lines[0] == "1 Q0 a 1 3 x"
    back = load_run(tmp_path / "r")
    assert back["1"].entries == runs[0].entries and back["2"].entries == runs[1].entries
    assert run_tag(tmp_path / "r") == "x"


def test_ranked_list_from_scores_order():
    r = RankedList.from_scores("t", {"b": 1.0, "a": 1.0, "c": 2.0})
    assert r.doc_ids == ["c", "a", "b"]
    assert r.ranks() == {"c": 1, "a": 2, "b": 3}
    assert RankedList.from_scores("t", {"b": 1.0, "a": 1.0, "c": 2.0}, k=2).doc_ids == ["c", "a"]


def test_mesh_names_bundled_and_round_trip(tmp_path):
    names = load_mesh_names()
    assert names
    write_mesh_names({"D1": "x y", "C2": "Z"}, tmp_path / "m.tsv")
    assert load_mesh_names(tmp_path / "m.tsv") == {"C2": "Z", "D1": "x y"}


def test_facet_signals_distinct():
    ids = [f.signal.bos_id for f in Facet] + [f.signal.eos_id for f in Facet]
    assert len(set(ids)) == 10
    assert Facet.DISEASE.signal.bos_id == 4 and Facet.DISEASE.signal.eos_id == 9


def test_entity_token():
    assert entity_token("D018281") == "emesh_d018281"


def test_abs_example_length_limit(braf_doc):
    with pytest.raises(DataError):
        AbsExample(braf_doc, Facet.DISEASE, tuple(["x"] * 51))


def _judged(braf_doc):
    other = Document("2", "Unrelated title.", "Nothing here.", (), ())
    return [braf_doc, other], {"1": {braf_doc.id: 2, "2": 0, "missing": 1}}


def test_rel_examples_labels(braf_doc, braf_case, caplog):
    corpus, qrels = _judged(braf_doc)
    ex = build_training_examples([braf_case], qrels, corpus, "rel", {})
    assert all(isinstance(e, RelExample) for e in ex)
    assert {e.doc.id: e.label for e in ex} == {braf_doc.id: True, "2": False}
    assert ex[0].query_sentences == ("Melanoma", "BRAF (E586K)", "64-year-old male")
    assert "skipped 1" in caplog.text


def test_ext_examples_only_relevant(braf_doc, braf_case):
    corpus, qrels = _judged(braf_doc)
    ex = build_training_examples([braf_case], qrels, corpus, "ext", {})
    assert len(ex) == 1 and isinstance(ex[0], ExtExample)
    e = ex[0]
    labelled = {t for t, l in zip(e.tokens, e.labels) if l}
    assert labelled == {"braf", "melanoma"}


def test_abs_examples_five_facets(braf_doc, braf_case):
    corpus, qrels = _judged(braf_doc)
    ex = build_training_examples([braf_case], qrels, corpus, "abs", {})
    assert [e.facet for e in ex] == list(Facet)
    targets = {e.facet: list(e.target_tokens) for e in ex}
    assert targets[Facet.GENETIC_VARIATION] == ["braf", "e586k"]
    assert targets[Facet.MESH_TERMS] == ["emesh_d008545"]
    assert targets[Facet.KEYWORDS] == ["melanoma", "braf"]


def test_keywords_fallback_to_mesh_names(braf_case):
    doc = Document("9", "T.", "A.", ("D1", "D2"), ())
    t = facet_targets(braf_case, doc, {"D1": "Skin Neoplasms"})
    assert t[Facet.KEYWORDS] == ["skin", "neoplasms", "d2"]
    no_mesh = Document("9", "T.", "A.", (), ())
    assert facet_targets(braf_case, no_mesh, {})[Facet.KEYWORDS] == []


def test_unknown_kind(braf_doc, braf_case):
    with pytest.raises(ValueError):
        build_training_examples([braf_case], {}, [braf_doc], "xyz", {})


@given(st.lists(st.sampled_from(["braf", "Melanoma", "x", "64", "male", "e586k", "kras"]), max_size=20))
def test_ext_label_invariants(tokens):
    case = PatientCase("1", "Melanoma", "BRAF (E586K)", "64-year-old male")
    labels = ext_labels(tokens, case)
    assert len(labels) == len(tokens)
    query = {w for s in case.query_sentences for w in index_tokenize(s)}
    for t, l in zip(tokens, labels):
        assert l == (t.lower() in query)
