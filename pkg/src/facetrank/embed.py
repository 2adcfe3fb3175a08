"""Joint word and entity-code embeddings.

Entity codes appear in the training text as tokens with a reserved prefix
(``emesh_d018281``) appended after the span they annotate, so words and codes
land in one vector space. Training is skip-gram with negative sampling; a
word's input vector is the average of its whole-token vector and its
character n-gram vectors (entity tokens use the whole-token vector only).
The stored vector of a token adds its output (context) vector to that input
vector, so a word and the code appended to it, which are each other's
contexts, end up close.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import ENTITY_PREFIX, Document, entity_token
from .text import index_tokenize

logger = logging.getLogger(__name__)


def char_ngrams(token: str, n_range: tuple[int, int] = (3, 6)) -> list[str]:
    """Character n-grams of ``<token>`` (boundary markers included), excluding the whole."""
    w = f"<{token}>"
    out = []
    for n in range(n_range[0], n_range[1] + 1):
        for i in range(len(w) - n + 1):
            g = w[i : i + n]
            if g != w:
                out.append(g)
    return list(dict.fromkeys(out))


def cosine(u: np.ndarray | None, v: np.ndarray | None) -> float:
    """Cosine similarity; zero or missing vectors give 0."""
    if u is None or v is None:
        return 0.0
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


class EmbeddingTable:
    """Token vectors in one space for words and prefixed entity codes.

    ``ngrams`` (optional) holds character n-gram vectors used to compose
    vectors for out-of-vocabulary words.
    """

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray, entity_prefix: str = ENTITY_PREFIX,
                 ngrams: Mapping[str, np.ndarray] | None = None, ngram_range: tuple[int, int] = (3, 6)):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError("need one vector row per token")
        self.tokens = list(tokens)
        self.vectors = vectors
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.entity_prefix = entity_prefix
        self.ngrams = dict(ngrams or {})
        self.ngram_range = ngram_range

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def is_entity(self, token: str) -> bool:
        return token.startswith(self.entity_prefix)

    def vector(self, token: str) -> np.ndarray | None:
        """Stored vector, else one composed from known n-grams, else ``None``."""
        i = self.index.get(token)
        if i is not None:
            return self.vectors[i]
        if not self.ngrams or self.is_entity(token):
            return None
        parts = [self.ngrams[g] for g in char_ngrams(token, self.ngram_range) if g in self.ngrams]
        if not parts:
            return None
        return np.mean(parts, axis=0).astype(np.float32)

    def similarity(self, a: str, b: str) -> float:
        return cosine(self.vector(a), self.vector(b))

    def neighbors(self, token: str, n: int = 10) -> list[tuple[str, float]]:
        v = self.vector(token)
        if v is None:
            return []
        norms = np.linalg.norm(self.vectors, axis=1) * np.linalg.norm(v)
        sims = np.divide(self.vectors @ v, norms, out=np.zeros(len(self)), where=norms > 0)
        order = sorted(range(len(self)), key=lambda i: (-sims[i], self.tokens[i]))
        return [(self.tokens[i], float(sims[i])) for i in order if self.tokens[i] != token][:n]

    def matrix_for(self, tokens: Sequence[str]) -> np.ndarray:
        """Row per token; tokens without any vector get zeros."""
        out = np.zeros((len(tokens), self.dim), dtype=np.float32)
        for i, t in enumerate(tokens):
            v = self.vector(t)
            if v is not None:
                out[i] = v
        return out

    def save(self, path) -> None:
        """Text format: ``count dim`` header, then ``token v1 ... vD`` (9 significant digits)."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{len(self.tokens)} {self.dim}\n")
            for t, row in zip(self.tokens, self.vectors):
                f.write(t + " " + " ".join(f"{x:.9g}" for x in row.tolist()) + "\n")


def load_embeddings(path, entity_prefix: str = ENTITY_PREFIX) -> EmbeddingTable:
    """Read the text vector format; a repeated token keeps its last vector."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: header must be 'count dim'")
        count, dim = int(header[0]), int(header[1])
        if dim <= 0:
            raise ValueError(f"{path}:1: dimension must be positive")
        rows: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            if parts[0] in rows:
                logger.warning("%s:%d: duplicate token %r, keeping the later vector", path, lineno, parts[0])
                del rows[parts[0]]
            rows[parts[0]] = np.array(parts[1:], dtype=np.float32)
    if len(rows) != count:
        logger.warning("%s: header declares %d vectors, read %d distinct", path, count, len(rows))
    tokens = list(rows)
    vectors = np.stack([rows[t] for t in tokens]) if tokens else np.zeros((0, dim), np.float32)
    return EmbeddingTable(tokens, vectors, entity_prefix)


def s_cos(query_tokens: Sequence[str], pseudo_tokens: Sequence[str], table: EmbeddingTable) -> float:
    """Mean over query tokens of the best cosine against any pseudo-query token."""
    query = list(dict.fromkeys(query_tokens))
    if not query:
        raise ValueError("query has no tokens")
    pseudo = [v for v in (table.vector(t) for t in dict.fromkeys(pseudo_tokens)) if v is not None]
    if not pseudo:
        return 0.0
    P = np.asarray(pseudo, dtype=np.float64)
    pn = np.linalg.norm(P, axis=1)
    total = 0.0
    for y in query:
        v = table.vector(y)
        if v is None:
            continue
        v = np.asarray(v, dtype=np.float64)
        denom = pn * np.linalg.norm(v)
        sims = np.divide(P @ v, denom, out=np.zeros(len(P)), where=denom > 0)
        total += float(np.clip(sims, -1.0, 1.0).max())
    return total / len(query)


# --------------------------------------------------------------- annotation


def annotate_tokens(tokens: Sequence[str], names: Mapping[tuple[str, ...], str],
                    prefix: str = ENTITY_PREFIX) -> list[str]:
    """Append the entity token after every (longest, leftmost) span naming a concept."""
    max_n = max((len(k) for k in names), default=0)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        for n in range(min(max_n, len(tokens) - i), 0, -1):
            code = names.get(tuple(tokens[i : i + n]))
            if code is not None:
                out.extend(tokens[i : i + n])
                out.append(entity_token(code, prefix))
                i += n
                break
        else:
            out.append(tokens[i])
            i += 1
    return out


def annotate_corpus(docs: Iterable[Document], mesh_names: Mapping[str, str],
                    prefix: str = ENTITY_PREFIX) -> list[list[str]]:
    """One token line per document with entity codes appended after named spans."""
    names = {}
    for code, name in sorted(mesh_names.items()):
        key = tuple(index_tokenize(name))
        if key:
            names.setdefault(key, code)
    return [annotate_tokens(index_tokenize(d.text), names, prefix) for d in docs]


# ------------------------------------------------------------------ training


def _window_pairs(encoded: Sequence[np.ndarray], line_order, window: int,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(center, context) pairs with a per-center window drawn from 1..window."""
    seq = np.concatenate([encoded[e] for e in line_order])
    line = np.concatenate([np.full(len(encoded[e]), n) for n, e in enumerate(line_order)])
    spans = rng.integers(1, window + 1, size=len(seq))
    centers, contexts = [], []
    for o in range(1, window + 1):
        i = np.arange(len(seq) - o)
        j = i + o
        same = line[i] == line[j]
        left = same & (o <= spans[i])  # j is in i's window
        right = same & (o <= spans[j])  # i is in j's window
        centers += [seq[i[left]], seq[j[right]]]
        contexts += [seq[j[left]], seq[i[right]]]
    return np.concatenate(centers), np.concatenate(contexts)


def train_embeddings(lines: Sequence[Sequence[str]], dim: int = 64, window: int = 5, negatives: int = 5,
                     ngram_range: tuple[int, int] = (3, 6), epochs: int = 5, seed: int = 0,
                     lr: float = 0.05, min_count: int = 1, batch_size: int = 256,
                     entity_prefix: str = ENTITY_PREFIX, output_vectors: bool = True) -> EmbeddingTable:
    """Skip-gram with negative sampling over subword-composed input vectors.

    Mini-batch SGD with a linearly decaying learning rate, single-threaded
    and fully determined by ``seed``.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    lines = [list(l) for l in lines if l]
    if not lines:
        raise ValueError("empty training corpus")
    rng = np.random.default_rng(seed)
    counts = Counter(t for l in lines for t in l)
    tokens = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    index = {t: i for i, t in enumerate(tokens)}
    V = len(tokens)

    ngram_ids: dict[str, int] = {}
    inputs: list[list[int]] = []
    for t in tokens:
        rows = [index[t]]
        if not t.startswith(entity_prefix):
            for g in char_ngrams(t, ngram_range):
                rows.append(V + ngram_ids.setdefault(g, len(ngram_ids)))
        inputs.append(rows)
    width = max(len(r) for r in inputs)
    in_idx = np.zeros((V, width), dtype=np.int64)
    in_mask = np.zeros((V, width), dtype=np.float32)
    for i, rows in enumerate(inputs):
        in_idx[i, : len(rows)] = rows
        in_mask[i, : len(rows)] = 1.0

    gen = torch.Generator().manual_seed(int(rng.integers(2**31)))
    W_in = ((torch.rand((V + len(ngram_ids), dim), generator=gen, dtype=torch.float64) - 0.5) / dim).float()
    W_out = torch.zeros((V, dim), dtype=torch.float32)
    in_idx_t, in_mask_t = torch.from_numpy(in_idx), torch.from_numpy(in_mask)
    in_count_t = in_mask_t.sum(dim=1)
    freq = np.array([counts[t] for t in tokens], dtype=np.float64) ** 0.75
    noise = np.cumsum(freq / freq.sum())

    encoded = [np.array([index[t] for t in l if t in index], dtype=np.int64) for l in lines]
    epoch_pairs = []
    for _ in range(epochs):
        centers, contexts = _window_pairs(encoded, rng.permutation(len(encoded)), window, rng)
        order = rng.permutation(len(centers))
        epoch_pairs.append((centers[order], contexts[order]))
    total_batches = max(1, sum(math.ceil(len(c) / batch_size) for c, _ in epoch_pairs))
    done = 0
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for centers, contexts in epoch_pairs:
            for s in range(0, len(centers), batch_size):
                alpha = lr * max(1e-4, 1.0 - done / total_batches)
                done += 1
                c = torch.from_numpy(centers[s : s + batch_size])
                pos = torch.from_numpy(contexts[s : s + batch_size])
                neg = np.minimum(np.searchsorted(noise, rng.random((len(c), negatives))), V - 1)
                targets = torch.cat([pos[:, None], torch.from_numpy(neg)], dim=1)  # (B, 1+K)
                labels = torch.zeros(targets.shape)
                labels[:, 0] = 1.0

                rows, mask, n = in_idx_t[c], in_mask_t[c], in_count_t[c]
                h = (W_in[rows] * mask[..., None]).sum(dim=1) / n[:, None]  # (B, D)
                out = W_out[targets]  # (B, 1+K, D)
                score = torch.einsum("bd,bkd->bk", h, out)
                g = (labels - torch.sigmoid(score)) * alpha  # ascent direction
                grad_h = torch.einsum("bk,bkd->bd", g, out)
                W_out.index_add_(0, targets.reshape(-1), (g[..., None] * h[:, None, :]).reshape(-1, dim))
                upd = grad_h[:, None, :] * mask[..., None]  # every input row takes the full step
                W_in.index_add_(0, rows.reshape(-1), upd.reshape(-1, dim))
    finally:
        torch.set_num_threads(prev_threads)

    W_in = W_in.numpy()
    word_vecs = (W_in[in_idx] * in_mask[..., None]).sum(axis=1) / in_mask.sum(axis=1)[:, None]
    if output_vectors:
        word_vecs = word_vecs + W_out.numpy()
    ngrams = {g: W_in[V + j].copy() for g, j in ngram_ids.items()}
    return EmbeddingTable(tokens, word_vecs.astype(np.float32), entity_prefix, ngrams, ngram_range)


class SkipGramEmbedder(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on token lines, ``transform`` token lists to vector arrays."""

    def __init__(self, dim=64, window=5, negatives=5, ngram_range=(3, 6), epochs=5, lr=0.05,
                 min_count=1, batch_size=256, entity_prefix=ENTITY_PREFIX, output_vectors=True, seed=0):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.ngram_range = ngram_range
        self.epochs = epochs
        self.lr = lr
        self.min_count = min_count
        self.batch_size = batch_size
        self.entity_prefix = entity_prefix
        self.output_vectors = output_vectors
        self.seed = seed

    def fit(self, X, y=None):
        self.table_ = train_embeddings(
            X, self.dim, self.window, self.negatives, tuple(self.ngram_range), self.epochs, self.seed,
            self.lr, self.min_count, self.batch_size, self.entity_prefix, self.output_vectors,
        )
        return self

    def transform(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "table_")
        return [self.table_.matrix_for(list(tokens)) for tokens in X]
