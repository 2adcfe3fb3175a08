"""Data model, file formats and training-example construction."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .text import BOS_IDS, EOS_IDS, content_words, index_tokenize

logger = logging.getLogger(__name__)

ENTITY_PREFIX = "emesh_"
MAX_TARGET_LEN = 50


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str
    mesh_codes: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise DataError("document id must be nonempty")
        if not (self.title + self.abstract).strip():
            raise DataError(f"document {self.id!r} has no text")
        object.__setattr__(self, "mesh_codes", tuple(self.mesh_codes))
        object.__setattr__(self, "keywords", tuple(self.keywords))

    @property
    def text(self) -> str:
        if not self.title:
            return self.abstract
        sep = "" if self.title.rstrip().endswith((".", "?", "!")) else "."
        return f"{self.title}{sep} {self.abstract}".strip()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "mesh_codes": list(self.mesh_codes),
            "keywords": list(self.keywords),
        }


@dataclass(frozen=True)
class PatientCase:
    topic_id: str
    disease: str
    gene: str
    demographics: str = ""
    mesh_terms: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.disease.strip() or not self.gene.strip():
            raise DataError(f"topic {self.topic_id!r}: disease and gene are required")
        object.__setattr__(self, "mesh_terms", tuple(self.mesh_terms))
        object.__setattr__(self, "keywords", tuple(self.keywords))

    @property
    def query_sentences(self) -> list[str]:
        """Facet sentences fed to the matching model (MeSH terms excluded)."""
        return [s for s in (self.disease, self.gene, self.demographics) if s.strip()]

    def query_words(self) -> list[str]:
        """Distinct content words of the disease, gene and demographics facets."""
        return list(dict.fromkeys(w for s in self.query_sentences for w in content_words(s)))

    def to_json(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "disease": self.disease,
            "gene": self.gene,
            "demographics": self.demographics,
            "mesh_terms": list(self.mesh_terms),
            "keywords": list(self.keywords),
        }


Qrels = dict[str, dict[str, int]]


@dataclass
class RankedList:
    """Ordered (doc id, score) pairs for one topic.

    Use :meth:`from_scores` to get the canonical order: score descending,
    ties by ascending doc id.
    """

    topic_id: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    @classmethod
    def from_scores(cls, topic_id: str, scores: Mapping[str, float], k: int | None = None):
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        if k is not None:
            ranked = ranked[:k]
        return cls(topic_id, [(d, float(s)) for d, s in ranked])

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ranks(self) -> dict[str, int]:
        return {d: i for i, (d, _) in enumerate(self.entries, start=1)}


class Facet(enum.IntEnum):
    DISEASE = 0
    GENETIC_VARIATION = 1
    DEMOGRAPHICS = 2
    MESH_TERMS = 3
    KEYWORDS = 4

    @property
    def signal(self) -> "FacetSignal":
        return FacetSignal(self)


@dataclass(frozen=True)
class FacetSignal:
    facet: Facet

    @property
    def bos_id(self) -> int:
        return BOS_IDS[self.facet]

    @property
    def eos_id(self) -> int:
        return EOS_IDS[self.facet]


@dataclass(frozen=True)
class RelExample:
    doc: Document
    query_sentences: tuple[str, ...]
    label: bool
    topic_id: str = ""


@dataclass(frozen=True)
class ExtExample:
    tokens: tuple[str, ...]
    labels: tuple[bool, ...]
    doc: Document | None = None
    topic_id: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise DataError("tokens and labels differ in length")


@dataclass(frozen=True)
class AbsExample:
    doc: Document
    facet: Facet
    target_tokens: tuple[str, ...]
    topic_id: str = ""

    def __post_init__(self):
        if len(self.target_tokens) > MAX_TARGET_LEN:
            raise DataError(
                f"target of {len(self.target_tokens)} tokens exceeds {MAX_TARGET_LEN}"
            )

    @property
    def signal(self) -> FacetSignal:
        return FacetSignal(self.facet)


# ---------------------------------------------------------------- file I/O


def _read_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def load_corpus(path) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        try:
            doc = Document(
                id=str(obj["id"]),
                title=obj.get("title", ""),
                abstract=obj.get("abstract", ""),
                mesh_codes=tuple(obj.get("mesh_codes") or ()),
                keywords=tuple(obj.get("keywords") or ()),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if doc.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
        seen.add(doc.id)
        docs.append(doc)
    return docs


def _dump_jsonl(rows: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_corpus(docs: Iterable[Document], path) -> None:
    _dump_jsonl((d.to_json() for d in docs), path)


def load_topics(path) -> list[PatientCase]:
    topics = []
    for lineno, obj in _read_jsonl(path):
        try:
            topics.append(
                PatientCase(
                    topic_id=str(obj["topic_id"]),
                    disease=obj["disease"],
                    gene=obj["gene"],
                    demographics=obj.get("demographics", ""),
                    mesh_terms=tuple(obj.get("mesh_terms") or ()),
                    keywords=tuple(obj.get("keywords") or ()),
                )
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return topics


def write_topics(topics: Iterable[PatientCase], path) -> None:
    _dump_jsonl((t.to_json() for t in topics), path)


def load_qrels(path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 'topic 0 doc grade'")
            topic, _, doc, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise DataError(f"{path}:{lineno}: grade {grade!r} is not an integer") from None
            if g not in (0, 1, 2):
                raise DataError(f"{path}:{lineno}: grade {g} outside {{0,1,2}}")
            qrels.setdefault(topic, {})[doc] = g
    return qrels


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for topic in qrels:
            for doc, grade in qrels[topic].items():
                f.write(f"{topic} 0 {doc} {grade}\n")


def write_run(runs: Iterable[RankedList], path, tag: str = "facetrank") -> None:
    """TREC run file: ``topic Q0 doc rank score tag``."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ranked in runs:
            for rank, (doc, score) in enumerate(ranked.entries, start=1):
                f.write(f"{ranked.topic_id} Q0 {doc} {rank} {score:.10g} {tag}\n")


def load_run(path) -> dict[str, RankedList]:
    """Read a TREC run; entries are ordered by the rank column."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    tag = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 columns")
            topic, _, doc, rank, score, tag = parts
            rows.setdefault(topic, []).append((int(rank), doc, float(score)))
    runs = {}
    for topic, items in rows.items():
        items.sort()
        runs[topic] = RankedList(topic, [(d, s) for _, d, s in items])
    return runs


def run_tag(path) -> str | None:
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) == 6:
                return parts[5]
    return None


def load_mesh_names(path=None) -> dict[str, str]:
    """Code to preferred-name table (tab-separated). Defaults to the bundled file."""
    if path is None:
        text = resources.files("facetrank.data").joinpath("mesh_names.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        code, _, name = line.partition("\t")
        table[code.strip()] = name.strip()
    return table


def write_mesh_names(names: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for code in sorted(names):
            f.write(f"{code}\t{names[code]}\n")


def entity_token(code: str, prefix: str = ENTITY_PREFIX) -> str:
    """``D018281`` -> ``emesh_d018281``."""
    return prefix + code.lower()


# ------------------------------------------------------- training examples


def facet_targets(
    case: PatientCase, doc: Document, mesh_names: Mapping[str, str]
) -> dict[Facet, list[str]]:
    """Word-level decoder targets for each facet of a (topic, document) pair.

    Keywords come from the document's author keywords, falling back to the
    preferred names of its MeSH codes when it has none.
    """
    if doc.keywords:
        kw_text = " ".join(doc.keywords)
    elif doc.mesh_codes:
        kw_text = " ".join(mesh_names.get(c, c) for c in doc.mesh_codes)
    else:
        kw_text = ""
    targets = {
        Facet.DISEASE: content_words(case.disease),
        Facet.GENETIC_VARIATION: content_words(case.gene),
        Facet.DEMOGRAPHICS: content_words(case.demographics),
        Facet.MESH_TERMS: [entity_token(c) for c in case.mesh_terms],
        Facet.KEYWORDS: content_words(kw_text),
    }
    return {f: t[:MAX_TARGET_LEN] for f, t in targets.items()}


def ext_labels(doc_tokens: Sequence[str], case: PatientCase) -> list[bool]:
    query = {w.lower() for s in case.query_sentences for w in index_tokenize(s)}
    return [t.lower() in query for t in doc_tokens]


def build_training_examples(
    topics: Sequence[PatientCase],
    qrels: Qrels,
    corpus: Sequence[Document],
    model_kind: str,
    mesh_names: Mapping[str, str] | None = None,
) -> list:
    """Training examples for ``rel``, ``ext`` or ``abs`` from judged pairs.

    Only qrels-judged pairs are used; judgments naming unknown documents are
    skipped and counted in the log.
    """
    if model_kind not in ("rel", "ext", "abs"):
        raise ValueError(f"unknown model kind {model_kind!r}; expected rel, ext or abs")
    if mesh_names is None:
        mesh_names = load_mesh_names()
    by_id = {d.id: d for d in corpus}
    examples: list = []
    skipped = 0
    for case in topics:
        for doc_id, grade in qrels.get(case.topic_id, {}).items():
            doc = by_id.get(doc_id)
            if doc is None:
                skipped += 1
                continue
            relevant = grade >= 1
            if model_kind == "rel":
                examples.append(
                    RelExample(doc, tuple(case.query_sentences), relevant, case.topic_id)
                )
            elif not relevant:
                continue
            elif model_kind == "ext":
                tokens = index_tokenize(doc.text)
                examples.append(
                    ExtExample(tuple(tokens), tuple(ext_labels(tokens, case)), doc, case.topic_id)
                )
            else:
                for facet, target in facet_targets(case, doc, mesh_names).items():
                    if target:
                        examples.append(AbsExample(doc, facet, tuple(target), case.topic_id))
    if skipped:
        logger.warning("skipped %d judgments naming documents absent from the corpus", skipped)
    return examples
