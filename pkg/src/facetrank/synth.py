"""Deterministic synthetic corpus, topics and qrels in the TREC-PM shape.

Each topic plants a disease term and a gene symbol (plus a synonym of the
symbol). Diseases and genes come from pools shared across topics, so a
held-out topic usually pairs entities that training topics have seen. Grading rule, applied to every judged pair:

* 2 if the document mentions both the disease term and the gene symbol,
* 1 if it mentions the disease term and the gene synonym,
* 0 otherwise.

Hard negatives mention only one of the planted terms, often several times,
so term-matching alone ranks them high.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .corpus import Document, PatientCase, Qrels
from .text import index_tokenize

_CONSONANTS = list("bcdfghklmnprstvz")
_VOWELS = list("aeiou")
_DISEASE_SUFFIXES = ["oma", "itis", "osis", "emia", "opathy", "blastoma"]
_ORGANS = ["lung", "breast", "gastric", "colon", "thyroid", "renal", "hepatic", "ovarian"]
_VARIATIONS = ["amplification", "deletion", "fusion", "mutation", "overexpression"]
_SEXES = ["male", "female"]


@dataclass
class VocabSpec:
    n_filler: int = 600
    n_decoy_diseases: int = 40
    n_decoy_genes: int = 40
    disease_pool: float = 0.5  # pool sizes as fractions of n_topics
    gene_pool: float = 0.5
    title_len: tuple[int, int] = (6, 11)
    sentence_len: tuple[int, int] = (8, 14)
    relevant_sentences: tuple[int, int] = (3, 6)
    negative_sentences: tuple[int, int] = (2, 5)
    negative_repeats: tuple[int, int] = (1, 2)
    demographics_rate: float = 0.4
    topic_demographics_share: float = 0.1
    relevant_fraction: float = 0.13
    min_relevant: int = 5
    grade1_fraction: float = 0.3
    negative_mix: dict = field(
        default_factory=lambda: {"disease": 0.3, "gene": 0.25, "synonym": 0.1, "other": 0.35}
    )


@dataclass(frozen=True)
class TopicLexicon:
    disease_term: str
    gene: str
    synonym: str
    disease_code: str
    gene_code: str


class SyntheticCollection(NamedTuple):
    corpus: list[Document]
    topics: list[PatientCase]
    qrels: Qrels
    lexicon: dict[str, TopicLexicon]
    mesh_names: dict[str, str]


class _Words:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set(_ORGANS) | set(_VARIATIONS) | set(_SEXES) | {"year", "old"}

    def _fresh(self, make) -> str:
        while True:
            w = make()
            if w not in self.used:
                self.used.add(w)
                return w

    def syllables(self, n: int) -> str:
        r = self.rng
        return "".join(r.choice(_CONSONANTS) + r.choice(_VOWELS) for _ in range(n))

    def filler(self) -> str:
        def make():
            w = self.syllables(int(self.rng.integers(1, 4)))
            return "" if w.endswith(tuple(_DISEASE_SUFFIXES)) else w

        self.used.add("")
        return self._fresh(make)

    def disease(self) -> str:
        return self._fresh(lambda: self.syllables(2) + self.rng.choice(_DISEASE_SUFFIXES))

    def gene(self) -> str:
        def make():
            letters = "".join(self.rng.choice(list("abcdefghklmnprstvwxz"), size=int(self.rng.integers(3, 5))))
            return letters + str(int(self.rng.integers(1, 20)))

        return self._fresh(make)


def _grade(tokens: set[str], lex: TopicLexicon) -> int:
    if lex.disease_term not in tokens:
        return 0
    if lex.gene in tokens:
        return 2
    if lex.synonym in tokens:
        return 1
    return 0


def generate_synthetic(
    seed: int, n_docs: int, n_topics: int, vocab_spec: VocabSpec | None = None
) -> SyntheticCollection:
    """Build a corpus of ``n_docs`` documents judged against ``n_topics`` topics."""
    if n_topics < 1 or n_docs < 10 * n_topics:
        raise ValueError("need n_topics >= 1 and n_docs >= 10 * n_topics")
    spec = vocab_spec or VocabSpec()
    rng = np.random.default_rng(seed)
    words = _Words(rng)

    filler = [words.filler() for _ in range(spec.n_filler)]
    zipf = 1.0 / np.arange(1, len(filler) + 1)
    zipf /= zipf.sum()
    decoy_diseases = [words.disease() for _ in range(spec.n_decoy_diseases)]
    decoy_genes = [words.gene() for _ in range(spec.n_decoy_genes)]

    n_dpool = max(1, int(round(spec.disease_pool * n_topics)))
    n_gpool = max(1, int(round(spec.gene_pool * n_topics)), -(-n_topics // n_dpool))
    mesh_names: dict[str, str] = {}
    codes = rng.choice(np.arange(900000, 1000000), size=n_dpool + n_gpool + len(decoy_diseases) + len(decoy_genes), replace=False)
    code_iter = iter(int(c) for c in codes)
    term_codes: dict[str, str] = {}
    for d in decoy_diseases:
        term_codes[d] = f"D{next(code_iter):06d}"
    for g in decoy_genes:
        term_codes[g] = f"C{next(code_iter):06d}"

    # Topics draw disease and gene entities from shared pools, so different
    # topics can ask about the same disease (or gene) in a new combination.
    pool_d = []
    for _ in range(n_dpool):
        term = words.disease()
        organ = str(rng.choice(_ORGANS)) if rng.random() < 0.5 else ""
        pool_d.append((term, f"{organ} {term}".strip(), f"D{next(code_iter):06d}"))
    pool_g = [(words.gene(), words.gene(), f"C{next(code_iter):06d}") for _ in range(n_gpool)]
    for term, disease_text, dcode in pool_d:
        term_codes[term] = dcode
        mesh_names[dcode] = disease_text
    for gene, syn, gcode in pool_g:
        term_codes[gene] = term_codes[syn] = gcode
        mesh_names[gcode] = gene.upper()
    pairs = rng.choice(n_dpool * n_gpool, size=n_topics, replace=False)

    topics: list[PatientCase] = []
    lexicon: dict[str, TopicLexicon] = {}
    for t, pair in enumerate(pairs):
        tid = str(t + 1)
        term, disease_text, dcode = pool_d[int(pair) // n_gpool]
        gene, syn, gcode = pool_g[int(pair) % n_gpool]
        variation = rng.choice(_VARIATIONS)
        age, sex = int(rng.integers(30, 80)), rng.choice(_SEXES)
        lexicon[tid] = TopicLexicon(term, gene, syn, dcode, gcode)
        topics.append(
            PatientCase(
                topic_id=tid,
                disease=disease_text,
                gene=f"{gene.upper()} {variation}",
                demographics=f"{age}-year-old {sex}",
                mesh_terms=(dcode, gcode),
                keywords=(disease_text, gene.upper()),
            )
        )
    for d in decoy_diseases:
        mesh_names[term_codes[d]] = d
    for g in decoy_genes:
        mesh_names[term_codes[g]] = g.upper()

    def sentence(lo_hi) -> list[str]:
        n = int(rng.integers(lo_hi[0], lo_hi[1] + 1))
        return list(rng.choice(filler, size=n, p=zipf))

    def demographics_phrase(case: PatientCase | None) -> list[str]:
        if case is not None:
            return index_tokenize(case.demographics)
        return [str(int(rng.integers(30, 80))), "year", "old", str(rng.choice(_SEXES))]

    def make_doc(plants: list[list[str]], n_sent: tuple[int, int], title_plants: int, case) -> tuple[str, str, list[str]]:
        title = sentence(spec.title_len)
        sents = [sentence(spec.sentence_len) for _ in range(int(rng.integers(n_sent[0], n_sent[1] + 1)))]
        for i, phrase in enumerate(plants):
            if i < title_plants:
                pos = int(rng.integers(0, len(title) + 1))
                title[pos:pos] = phrase
            else:
                s = sents[int(rng.integers(0, len(sents)))]
                pos = int(rng.integers(0, len(s) + 1))
                s[pos:pos] = phrase
        if rng.random() < spec.demographics_rate:
            s = sents[int(rng.integers(0, len(sents)))]
            pos = int(rng.integers(0, len(s) + 1))
            s[pos:pos] = demographics_phrase(case if rng.random() < spec.topic_demographics_share else None)
        mentioned = [w for p in plants for w in p]
        title_text = " ".join(title).capitalize() + "."
        abstract = " ".join(" ".join(s).capitalize() + "." for s in sents)
        return title_text, abstract, mentioned

    def disease_phrase(case: PatientCase, lex: TopicLexicon) -> list[str]:
        return index_tokenize(case.disease) if rng.random() < 0.5 else [lex.disease_term]

    owned = n_docs // n_topics
    n_rel = min(owned, max(spec.min_relevant, int(round(spec.relevant_fraction * owned))))
    raw: list[tuple[str, str, list[str], str | None]] = []
    for case in topics:
        lex = lexicon[case.topic_id]
        variation = index_tokenize(case.gene)[-1]
        n_grade1 = int(round(spec.grade1_fraction * n_rel))
        for i in range(n_rel):
            gene_word = lex.synonym if i < n_grade1 else lex.gene
            plants = [disease_phrase(case, lex)]
            plants += [[gene_word] + ([variation] if rng.random() < 0.5 else [])]
            for _ in range(int(rng.integers(0, 2))):
                plants.append([gene_word] if rng.random() < 0.5 else [lex.disease_term])
            order = rng.permutation(len(plants))
            plants = [plants[j] for j in order]
            raw.append((*make_doc(plants, spec.relevant_sentences, int(rng.integers(0, 2)), case), case.topic_id))
        kinds = list(spec.negative_mix)
        probs = np.array([spec.negative_mix[k] for k in kinds], dtype=float)
        probs /= probs.sum()
        for _ in range(owned - n_rel):
            kind = kinds[int(rng.choice(len(kinds), p=probs))]
            decoy_d = decoy_diseases[int(rng.integers(len(decoy_diseases)))]
            decoy_g = decoy_genes[int(rng.integers(len(decoy_genes)))]
            if kind == "disease":
                reps = int(rng.integers(spec.negative_repeats[0], spec.negative_repeats[1] + 1))
                plants = [disease_phrase(case, lex) for _ in range(reps)]
                plants += [[decoy_g, variation]]
                title_plants = 1
            elif kind == "gene":
                reps = int(rng.integers(spec.negative_repeats[0], spec.negative_repeats[1] + 1))
                plants = [[lex.gene, variation] for _ in range(reps)]
                plants += [[decoy_d]]
                title_plants = 1
            elif kind == "synonym":
                plants = [[lex.synonym]] * int(rng.integers(1, 3)) + [[decoy_d]]
                title_plants = 0
            else:
                plants = [[decoy_d], [decoy_g]]
                title_plants = 0
            raw.append((*make_doc(plants, spec.negative_sentences, title_plants, case), case.topic_id))
    for _ in range(n_docs - len(raw)):
        plants = [[decoy_diseases[int(rng.integers(len(decoy_diseases)))]]] if rng.random() < 0.5 else []
        raw.append((*make_doc(plants, spec.negative_sentences, 0, None), None))

    ids = rng.choice(np.arange(10_000_000, 40_000_000), size=len(raw), replace=False)
    order = rng.permutation(len(raw))
    corpus: list[Document] = []
    owner: dict[str, str | None] = {}
    for j in order:
        title, abstract, mentioned, _ = raw[j]
        doc_id = str(int(ids[j]))
        mesh = sorted({term_codes[w] for w in mentioned if w in term_codes})
        if rng.random() < 0.3:
            mesh.append("D006801")
        if rng.random() < 0.5:
            picks = [w for w in dict.fromkeys(mentioned) if w in term_codes][:2]
            picks += list(rng.choice(filler[:200], size=int(rng.integers(1, 3)), replace=False))
            keywords = tuple(str(w) for w in picks)
        else:
            keywords = ()
        corpus.append(Document(doc_id, title, abstract, tuple(mesh), keywords))
        owner[doc_id] = raw[j][3]

    token_sets = {d.id: set(index_tokenize(d.text)) for d in corpus}
    qrels: Qrels = {}
    target_neg = int(round(n_rel * (1 - spec.relevant_fraction) / spec.relevant_fraction))
    all_ids = [d.id for d in corpus]
    for case in topics:
        lex = lexicon[case.topic_id]
        mine = [d for d in all_ids if owner[d] == case.topic_id]
        judged = {d: _grade(token_sets[d], lex) for d in mine}
        negatives = [d for d, g in judged.items() if g == 0]
        if len(negatives) > target_neg:
            keep = set(rng.choice(negatives, size=target_neg, replace=False).tolist())
            judged = {d: g for d, g in judged.items() if g > 0 or d in keep}
        else:
            others = [d for d in all_ids if owner[d] != case.topic_id]
            need = min(target_neg - len(negatives), len(others))
            for d in rng.choice(others, size=need, replace=False).tolist():
                judged[d] = _grade(token_sets[d], lex)
        qrels[case.topic_id] = dict(sorted(judged.items()))
    return SyntheticCollection(corpus, topics, qrels, lexicon, mesh_names)
