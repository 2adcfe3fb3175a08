"""Inverted index with BM25 scoring and a multi-field disjunction-max query.

Snapshot format (little endian)::

    magic      8 bytes   b"FRINDEX\\0"
    version    uint32    currently 1
    header_n   uint64    byte length of the JSON header
    header     JSON      {"fields", "doc_ids", "k1", "b", "terms": {field: [...]},
                          "lengths": {field: [...]}}
    per field, in header order:
      offsets  uint64[len(terms) + 1]   postings slice bounds per term
      ords     uint32[offsets[-1]]      doc ordinals, ascending within a term
      tfs      uint32[offsets[-1]]      term frequencies
"""

from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Document, PatientCase, RankedList
from .text import index_tokenize

K1 = 1.2
B = 0.75
DEFAULT_FIELDS = ("title", "abstract")

_MAGIC = b"FRINDEX\0"
_VERSION = 1


class EmptyQueryError(ValueError):
    pass


@dataclass
class Postings:
    ords: np.ndarray
    tfs: np.ndarray


@dataclass
class InvertedIndex:
    fields: tuple[str, ...]
    doc_ids: list[str]
    postings: dict[str, dict[str, Postings]]
    lengths: dict[str, np.ndarray]
    k1: float = K1
    b: float = B
    _ord: dict[str, int] = field(default_factory=dict, repr=False)
    _forward: list[Counter] | None = field(default=None, repr=False)

    def __post_init__(self):
        self._ord = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def avg_length(self, fld: str) -> float:
        lens = self.lengths[fld]
        return float(lens.mean()) if len(lens) else 0.0

    def df(self, fld: str, term: str) -> int:
        p = self.postings[fld].get(term)
        return 0 if p is None else len(p.ords)

    def idf(self, fld: str, term: str) -> float:
        n, df = self.n_docs, self.df(fld, term)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def ordinal(self, doc_id: str) -> int:
        return self._ord[doc_id]

    def forward(self) -> list[Counter]:
        """Per-document term counts summed over fields."""
        if self._forward is None:
            fwd = [Counter() for _ in self.doc_ids]
            for fld in self.fields:
                for term, p in self.postings[fld].items():
                    for o, tf in zip(p.ords.tolist(), p.tfs.tolist()):
                        fwd[o][term] += tf
            self._forward = fwd
        return self._forward

    # -------------------------------------------------------------- snapshot

    def save(self, path) -> None:
        header = {
            "fields": list(self.fields),
            "doc_ids": self.doc_ids,
            "k1": self.k1,
            "b": self.b,
            "terms": {f: sorted(self.postings[f]) for f in self.fields},
            "lengths": {f: self.lengths[f].tolist() for f in self.fields},
        }
        raw = json.dumps(header, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQ", _VERSION, len(raw)))
            fh.write(raw)
            for f in self.fields:
                terms = header["terms"][f]
                sizes = [len(self.postings[f][t].ords) for t in terms]
                offsets = np.concatenate([[0], np.cumsum(sizes, dtype=np.uint64)]).astype("<u8")
                ords = [self.postings[f][t].ords for t in terms]
                tfs = [self.postings[f][t].tfs for t in terms]
                fh.write(offsets.tobytes())
                fh.write(np.concatenate(ords or [np.empty(0)]).astype("<u4").tobytes())
                fh.write(np.concatenate(tfs or [np.empty(0)]).astype("<u4").tobytes())

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        data = Path(path).read_bytes()
        if data[:8] != _MAGIC:
            raise ValueError(f"{path}: not an index snapshot")
        version, n = struct.unpack_from("<IQ", data, 8)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        pos = 8 + 12
        header = json.loads(data[pos : pos + n].decode("utf-8"))
        pos += n
        postings: dict[str, dict[str, Postings]] = {}
        for f in header["fields"]:
            terms = header["terms"][f]
            offsets = np.frombuffer(data, "<u8", len(terms) + 1, pos).astype(np.int64)
            pos += 8 * (len(terms) + 1)
            total = int(offsets[-1])
            ords = np.frombuffer(data, "<u4", total, pos).astype(np.int64)
            pos += 4 * total
            tfs = np.frombuffer(data, "<u4", total, pos).astype(np.int64)
            pos += 4 * total
            postings[f] = {
                t: Postings(ords[offsets[i] : offsets[i + 1]], tfs[offsets[i] : offsets[i + 1]])
                for i, t in enumerate(terms)
            }
        lengths = {f: np.asarray(header["lengths"][f], dtype=np.int64) for f in header["fields"]}
        return cls(
            tuple(header["fields"]), list(header["doc_ids"]), postings, lengths,
            header["k1"], header["b"],
        )


def build_index(
    corpus: Sequence[Document], fields: Iterable[str] = DEFAULT_FIELDS, k1: float = K1, b: float = B
) -> InvertedIndex:
    if not corpus:
        raise ValueError("cannot index an empty corpus")
    fields = tuple(fields)
    raw: dict[str, dict[str, tuple[list[int], list[int]]]] = {f: {} for f in fields}
    lengths = {f: np.zeros(len(corpus), dtype=np.int64) for f in fields}
    for o, doc in enumerate(corpus):
        for f in fields:
            tokens = index_tokenize(getattr(doc, f))
            lengths[f][o] = len(tokens)
            for term, tf in Counter(tokens).items():
                ords, tfs = raw[f].setdefault(term, ([], []))
                ords.append(o)
                tfs.append(tf)
    postings = {
        f: {t: Postings(np.asarray(o, dtype=np.int64), np.asarray(c, dtype=np.int64)) for t, (o, c) in raw[f].items()}
        for f in fields
    }
    return InvertedIndex(fields, [d.id for d in corpus], postings, lengths, k1, b)


def _bm25(idf: float, tf, length, avglen: float, k1: float, b: float):
    norm = k1 * (1.0 - b + b * length / avglen) if avglen > 0 else k1
    return idf * tf * (k1 + 1.0) / (tf + norm)


def bm25_score(index: InvertedIndex, fld: str, term: str, doc_id: str) -> float:
    """BM25 contribution of one term in one field of one document."""
    o = index.ordinal(doc_id)
    p = index.postings[fld].get(term)
    if p is None:
        return 0.0
    hit = np.searchsorted(p.ords, o)
    if hit >= len(p.ords) or p.ords[hit] != o:
        return 0.0
    return float(
        _bm25(index.idf(fld, term), float(p.tfs[hit]), float(index.lengths[fld][o]),
              index.avg_length(fld), index.k1, index.b)
    )


def query_terms(case: PatientCase) -> list[str]:
    """Distinct index tokens of the disease, gene and demographics facets."""
    return list(dict.fromkeys(t for s in (case.disease, case.gene, case.demographics) for t in index_tokenize(s)))


def score_terms(index: InvertedIndex, terms: Sequence[str], tie: float = 0.0) -> np.ndarray:
    """Per-document disjunction-max scores summed over ``terms``.

    For each term the field scores are combined as ``max + tie * (sum - max)``.
    """
    total = np.zeros(index.n_docs)
    for term in dict.fromkeys(terms):
        per_field = np.zeros((len(index.fields), index.n_docs))
        for i, f in enumerate(index.fields):
            p = index.postings[f].get(term)
            if p is None:
                continue
            lens = index.lengths[f][p.ords].astype(float)
            per_field[i, p.ords] = _bm25(
                index.idf(f, term), p.tfs.astype(float), lens, index.avg_length(f), index.k1, index.b
            )
        best = per_field.max(axis=0)
        total += best + tie * (per_field.sum(axis=0) - best)
    return total


def edismax_search(
    index: InvertedIndex, case: PatientCase, k: int = 500, extra_terms: Sequence[str] = ()
) -> RankedList:
    """First-stage retrieval: top ``k`` documents by summed disjunction-max BM25."""
    terms = query_terms(case) + [t for t in extra_terms]
    if not terms:
        raise EmptyQueryError(f"topic {case.topic_id!r}: empty query after tokenization")
    return search_terms(index, terms, case.topic_id, k)


def search_terms(index: InvertedIndex, terms: Sequence[str], topic_id: str, k: int = 500) -> RankedList:
    scores = score_terms(index, terms)
    # zero-score documents are kept at the tail so k >= N returns the corpus
    ranked = sorted(zip(index.doc_ids, scores.tolist()), key=lambda e: (-e[1], e[0]))
    return RankedList(topic_id, ranked[:k])


def mlt_expand(
    index: InvertedIndex,
    seed_results: RankedList,
    n_terms: int,
    n_docs: int,
    exclude: Iterable[str] = (),
) -> list[str]:
    """Top TF-IDF terms over the first ``n_docs`` seed documents.

    Term frequency is summed over the seed documents and fields; idf uses the
    document frequency across all fields.
    """
    if not seed_results.entries:
        raise ValueError("more-like-this needs at least one seed document")
    if n_terms <= 0:
        return []
    fwd = index.forward()
    tf: Counter = Counter()
    for doc_id in seed_results.doc_ids[:n_docs]:
        tf.update(fwd[index.ordinal(doc_id)])
    excluded = set(exclude)
    n = index.n_docs

    def df(term: str) -> int:
        docs = set()
        for f in index.fields:
            p = index.postings[f].get(term)
            if p is not None:
                docs.update(p.ords.tolist())
        return len(docs)

    weights = {
        t: c * math.log(1.0 + (n - df(t) + 0.5) / (df(t) + 0.5)) for t, c in tf.items() if t not in excluded
    }
    return [t for t, _ in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:n_terms]]


class BM25Retriever(BaseEstimator):
    """First-stage retriever; ``fit`` indexes a corpus."""

    def __init__(self, k: int = 500, k1: float = K1, b: float = B, fields=DEFAULT_FIELDS,
                 use_mlt: bool = False, mlt_terms: int = 10, mlt_docs: int = 10):
        self.k = k
        self.k1 = k1
        self.b = b
        self.fields = fields
        self.use_mlt = use_mlt
        self.mlt_terms = mlt_terms
        self.mlt_docs = mlt_docs

    def fit(self, corpus: Sequence[Document], y=None):
        self.index_ = build_index(corpus, self.fields, self.k1, self.b)
        return self

    @classmethod
    def from_index(cls, index: InvertedIndex, **params) -> "BM25Retriever":
        est = cls(k1=index.k1, b=index.b, fields=index.fields, **params)
        est.index_ = index
        return est

    def search(self, case: PatientCase, k: int | None = None) -> RankedList:
        check_is_fitted(self, "index_")
        k = self.k if k is None else k
        ranked = edismax_search(self.index_, case, k)
        if self.use_mlt and ranked.entries:
            extra = mlt_expand(self.index_, ranked, self.mlt_terms, self.mlt_docs, exclude=query_terms(case))
            ranked = edismax_search(self.index_, case, k, extra_terms=extra)
        return ranked
