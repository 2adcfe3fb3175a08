"""Pseudo-query scoring and reciprocal rank fusion.

A candidate is ranked four ways: by its first-stage BM25 score, by the
relevance classifier, by ROUGE-1 recall of the query against the document's
pseudo-query, and by embedding similarity between the two. The rankings are
merged with reciprocal rank fusion, ``sum_l 1 / (k + rank_l(d))``.
"""

from __future__ import annotations

import json
import math
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from sklearn.base import BaseEstimator

from .abs import PseudoQueryGenerator
from .corpus import Document, Facet, PatientCase, RankedList
from .embed import EmbeddingTable, s_cos
from .ext import KeywordExtractor
from .index import BM25Retriever
from .rel import RelClassifier
from .text import SPECIAL_TOKENS

logger = logging.getLogger(__name__)

RRF_K = 60
FIRST_STAGE_K = 500
_SPECIAL = frozenset(SPECIAL_TOKENS)


@dataclass
class PseudoQuery:
    doc_id: str
    tokens: list[str] = field(default_factory=list)


def build_pseudo_query(doc_id: str, facet_outputs: Mapping[Facet, Sequence[str]] | Sequence[Sequence[str]],
                       ext_keywords: Sequence[str] = ()) -> PseudoQuery:
    """Facet outputs in facet order, then keywords; duplicates and special tokens dropped."""
    if isinstance(facet_outputs, Mapping):
        parts = [facet_outputs[f] for f in sorted(facet_outputs)]
    else:
        parts = list(facet_outputs)
    tokens = [t for p in [*parts, ext_keywords] for t in p if t not in _SPECIAL]
    return PseudoQuery(doc_id, list(dict.fromkeys(tokens)))


def _stem(token: str) -> str:
    for suffix in ("ing", "es", "ed", "s"):
        if token.endswith(suffix) and len(token) > len(suffix) + 2:
            return token[: -len(suffix)]
    return token


def rouge1_recall(query_tokens: Sequence[str], pseudo_tokens: Sequence[str], stem: bool = False,
                  stopwords: frozenset[str] = frozenset()) -> float:
    """``|distinct(q) & distinct(q_d)| / |distinct(q)|``; an empty query scores 0."""
    norm = _stem if stem else (lambda t: t)
    q = {norm(t) for t in query_tokens if t not in stopwords}
    if not q:
        logger.warning("ROUGE-1 recall of an empty query is taken as 0")
        return 0.0
    d = {norm(t) for t in pseudo_tokens if t not in stopwords}
    return len(q & d) / len(q)


def rrf_fuse(lists: Sequence[RankedList], k: float = RRF_K) -> RankedList:
    """Reciprocal rank fusion; a document missing from a list gains nothing from it.

    A single list passes through in its own order.
    """
    if not lists:
        raise ValueError("fusion needs at least one ranked list")
    if k <= 0:
        raise ValueError("fusion constant must be positive")
    topic = lists[0].topic_id
    if any(l.topic_id != topic for l in lists):
        raise ValueError("ranked lists belong to different topics")
    parts: dict[str, list[float]] = {}
    for l in lists:
        for rank, doc_id in enumerate(l.doc_ids, start=1):
            parts.setdefault(doc_id, []).append(1.0 / (k + rank))
    # fsum is exact-then-rounded, so list order cannot flip near-ties
    return RankedList.from_scores(topic, {d: math.fsum(v) for d, v in parts.items()})


@dataclass
class TopicDebug:
    topic_id: str
    query_tokens: list[str]
    candidates: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"topic_id": self.topic_id, "query_tokens": self.query_tokens,
                           "candidates": self.candidates}, indent=1, sort_keys=True)


class FacetReranker(BaseEstimator):
    """End-to-end reranking pipeline over already trained components.

    ``use_abs`` adds the ROUGE-1 and embedding-similarity rankings over the
    pseudo-queries; ``use_ext`` adds extracted keywords to those pseudo-queries.
    With REL and ABS both off the output is the first-stage order.
    """

    def __init__(self, retriever: BM25Retriever | None = None, rel: RelClassifier | None = None,
                 ext: KeywordExtractor | None = None, generator: PseudoQueryGenerator | None = None,
                 table: EmbeddingTable | None = None, use_rel=True, use_abs=True, use_ext=True,
                 k=FIRST_STAGE_K, rrf_k=RRF_K, rouge_stem=False, rouge_stopwords=frozenset()):
        self.retriever = retriever
        self.rel = rel
        self.ext = ext
        self.generator = generator
        self.table = table
        self.use_rel = use_rel
        self.use_abs = use_abs
        self.use_ext = use_ext
        self.k = k
        self.rrf_k = rrf_k
        self.rouge_stem = rouge_stem
        self.rouge_stopwords = rouge_stopwords

    def fit(self, corpus: Sequence[Document], y=None):
        """Index the documents the pipeline can return (models are trained separately)."""
        if self.retriever is None:
            self.retriever = BM25Retriever(k=self.k)
        if not hasattr(self.retriever, "index_"):
            self.retriever.fit(corpus)
        self.docs_ = {d.id: d for d in corpus}
        self.pseudo_: dict[str, PseudoQuery] = {}
        self.facet_outputs_: dict[str, dict[Facet, list[str]]] = {}
        if self.use_rel and self.rel is None:
            raise ValueError("use_rel needs a trained relevance classifier")
        if self.use_abs and self.generator is None:
            raise ValueError("use_abs needs a trained pseudo-query generator")
        if self.use_abs and self.use_ext and self.ext is None:
            raise ValueError("use_ext needs a trained keyword extractor")
        return self

    def pseudo_queries(self, doc_ids: Sequence[str]) -> dict[str, PseudoQuery]:
        """Pseudo-queries for ``doc_ids``; each document's is computed once and cached."""
        todo = [d for d in dict.fromkeys(doc_ids) if d not in self.pseudo_]
        if todo:
            docs = [self.docs_[d] for d in todo]
            facets = self.generator.generate(docs)
            keywords = self.ext.transform(docs) if self.use_ext else [[] for _ in docs]
            for doc, f, kw in zip(docs, facets, keywords):
                self.facet_outputs_[doc.id] = f
                self.pseudo_[doc.id] = build_pseudo_query(doc.id, f, kw)
        return {d: self.pseudo_[d] for d in doc_ids}

    def rerank_topic(self, case: PatientCase) -> tuple[RankedList, TopicDebug]:
        first = self.retriever.search(case, self.k)
        query = case.query_words()
        debug = TopicDebug(case.topic_id, query)
        if not first.entries:
            logger.warning("topic %s: first stage returned nothing", case.topic_id)
            return RankedList(case.topic_id, []), debug
        ids = first.doc_ids
        lists = {"bm25": first}
        scores = {"bm25": dict(first.entries)}
        if self.use_rel:
            rel = self.rel.rank(case, [self.docs_[d] for d in ids])
            lists["rel"], scores["rel"] = rel, dict(rel.entries)
        pseudo = {}
        if self.use_abs:
            pseudo = self.pseudo_queries(ids)
            rouge = {d: rouge1_recall(query, pseudo[d].tokens, self.rouge_stem, self.rouge_stopwords) for d in ids}
            lists["rouge"], scores["rouge"] = RankedList.from_scores(case.topic_id, rouge), rouge
            if self.table is not None:
                cos = {d: s_cos(query, pseudo[d].tokens, self.table) for d in ids}
                lists["scos"], scores["scos"] = RankedList.from_scores(case.topic_id, cos), cos
            else:
                logger.warning("no embedding table; the similarity ranking is left out")
        # a lone first-stage list passes through with its own scores
        fused = first if len(lists) == 1 else rrf_fuse(list(lists.values()), self.rrf_k)
        ranks = {name: l.ranks() for name, l in lists.items()}
        for d in ids:
            debug.candidates[d] = {
                "ranks": {n: r[d] for n, r in ranks.items()},
                "scores": {n: s[d] for n, s in scores.items()},
                "pseudo_query": pseudo[d].tokens if d in pseudo else [],
            }
        return fused, debug

    def predict(self, topics: Sequence[PatientCase]) -> dict[str, RankedList]:
        return {c.topic_id: self.rerank_topic(c)[0] for c in topics}
