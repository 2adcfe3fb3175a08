"""Document-query relevance matching.

The input packs ``[CLS]``, every document sentence followed by ``[SEP]``, and
finally the query facet sentences with a single closing ``[SEP]``. Segment ids
alternate A/B per sentence, continuing through the query sentences. The
relevance score is the sigmoid of a scalar head on the ``[CLS]`` vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._encoding import fit_tokenizer, make_encoder_config, sentence_pieces
from .corpus import Document, PatientCase, RankedList
from .nn import Adam, Encoder, EncoderConfig, LossWeights, weighted_bce
from .nn.training import (
    TrainLog,
    batch_indices,
    deterministic,
    load_checkpoint,
    pad_batch,
    precision_recall_f1,
    run_training,
    save_checkpoint,
    split_validation,
)
from .text import CLS, SEP, WordPieceTokenizer
from .validation import check_rel_input

SEGMENT_A, SEGMENT_B = 0, 1


@dataclass
class PackedInput:
    tokens: list[str]
    ids: list[int]
    segments: list[int]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def mask(self) -> list[bool]:
        return [True] * len(self.ids)


def pack_rel_input(
    doc: Document,
    query_sentences: Sequence[str],
    tokenizer: WordPieceTokenizer,
    max_len: int = 384,
) -> PackedInput:
    """Pack a document and query sentences into one encoder input.

    Trailing document sentences are dropped first (the last kept one may be cut
    short); the query is never truncated.
    """
    query = [p for p in (tokenizer.tokenize(s) for s in query_sentences) if p]
    q_len = sum(len(q) for q in query) + 1
    if 1 + q_len > max_len:
        raise ValueError(f"query alone needs {1 + q_len} tokens, more than max_len={max_len}")
    budget = max_len - 1 - q_len
    kept: list[list[str]] = []
    for sent in sentence_pieces(doc, tokenizer):
        if budget < 2:
            break
        part = sent[: budget - 1]
        kept.append(part)
        budget -= len(part) + 1
        if len(part) < len(sent):
            break

    tokens, segments = [CLS], [SEGMENT_A]
    for i, sent in enumerate(kept):
        seg = i % 2
        tokens += sent + [SEP]
        segments += [seg] * (len(sent) + 1)
    for j, q in enumerate(query):
        seg = (len(kept) + j) % 2
        tokens += q
        segments += [seg] * len(q)
    tokens.append(SEP)
    segments.append(segments[-1])
    return PackedInput(tokens, tokenizer.convert_tokens_to_ids(tokens), segments)


class RelModel(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.encoder = Encoder(config)
        self.head = nn.Linear(config.model_dim, 1)
        nn.init.trunc_normal_(self.head.weight, std=0.02, a=-0.04, b=0.04)
        nn.init.zeros_(self.head.bias)

    def forward(self, ids, segments, mask=None):
        hidden = self.encoder(ids, segments, mask)
        return self.head(hidden[:, 0]).squeeze(-1)


def collate(packed: Sequence[PackedInput]):
    ids = pad_batch([p.ids for p in packed])
    segments = pad_batch([p.segments for p in packed])
    return ids, segments, ids != 0


def rel_score(packed: PackedInput, model: RelModel) -> float:
    """Relevance probability of one packed input."""
    model.eval()
    with torch.no_grad():
        ids, seg, mask = collate([packed])
        return float(torch.sigmoid(model(ids, seg, mask))[0])


class RelClassifier(ClassifierMixin, BaseEstimator):
    """Relevance classifier over (document, query sentences) pairs.

    ``fit`` accepts a list of ``RelExample`` or (Document, query) pairs with
    labels ``y``. Desk-scale defaults; the full-scale setting is 12 layers,
    768 dims, 384 tokens, 30,000 steps with batch size 12.
    """

    def __init__(self, layers=2, model_dim=64, heads=4, ffn_dim=128, max_len=128,
                 steps=2000, batch_size=12, lr=1e-3, beta1=0.9, beta2=0.999, w0=0.15, w1=1.0,
                 val_fraction=0.2, eval_every=100, patience=2, factor=0.1,
                 vocab_size=4000, dropout=0.0, threshold=0.5, seed=0,
                 tokenizer=None, log_path=None):
        self.layers = layers
        self.model_dim = model_dim
        self.heads = heads
        self.ffn_dim = ffn_dim
        self.max_len = max_len
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.w0 = w0
        self.w1 = w1
        self.val_fraction = val_fraction
        self.eval_every = eval_every
        self.patience = patience
        self.factor = factor
        self.vocab_size = vocab_size
        self.dropout = dropout
        self.threshold = threshold
        self.seed = seed
        self.tokenizer = tokenizer
        self.log_path = log_path

    def _pack(self, docs, queries) -> list[PackedInput]:
        return [pack_rel_input(d, q, self.tokenizer_, self.max_len) for d, q in zip(docs, queries)]

    def fit(self, X, y=None, resume: dict | None = None):
        docs, queries, labels = check_rel_input(X, y)
        if labels is None:
            raise ValueError("labels are required")
        if resume is not None:
            self._restore(resume)
        else:
            self.tokenizer_ = self.tokenizer or fit_tokenizer(
                [d.text for d in docs] + [s for q in queries for s in q], self.vocab_size
            )
            self.config_ = make_encoder_config(self, len(self.tokenizer_))
        self.classes_ = np.array([False, True])
        packed = self._pack(docs, queries)
        target = torch.tensor(labels, dtype=torch.float32)
        weights = LossWeights(self.w0, self.w1)

        with deterministic(self.seed) as rng:
            if resume is None:
                self.model_ = RelModel(self.config_)
                self.optimizer_ = Adam.single(self.model_.parameters(), self.lr, beta1=self.beta1, beta2=self.beta2)
                self.step_, self.history_ = 0, []
            train_idx, val_idx = split_validation(len(packed), self.val_fraction, rng)
            if len(train_idx) == 0:
                train_idx = np.arange(len(packed))

            def step_fn(batch):
                b = train_idx[batch]
                ids, seg, mask = collate([packed[i] for i in b])
                p = torch.sigmoid(self.model_(ids, seg, mask))
                return weighted_bce(p, target[b], weights)

            def eval_fn():
                probs = self._probabilities([packed[i] for i in val_idx])
                gold = target[val_idx].numpy() > 0.5
                prf = precision_recall_f1(probs > self.threshold, gold)
                loss = weighted_bce(torch.as_tensor(probs), target[val_idx].double(), weights)
                return tuple(float(v) for v in prf), -float(loss)

            log = TrainLog(self.log_path, append=resume is not None)
            self.step_, self.history_ = run_training(
                self.model_, self.optimizer_, step_fn,
                batch_indices(len(train_idx), self.batch_size, rng), self.steps,
                eval_fn if len(val_idx) else None, self.eval_every, self.patience, self.factor,
                log, self.step_, self.history_,
            )
            self.log_ = log.rows
        return self

    def _probabilities(self, packed: Sequence[PackedInput], batch_size: int = 64) -> np.ndarray:
        self.model_.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(packed), batch_size):
                ids, seg, mask = collate(packed[i : i + batch_size])
                out.append(torch.sigmoid(self.model_(ids, seg, mask)).double().numpy())
        return np.concatenate(out) if out else np.zeros(0)

    def decision_scores(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        docs, queries, _ = check_rel_input(X)
        return self._probabilities(self._pack(docs, queries))

    def predict_proba(self, X) -> np.ndarray:
        p = self.decision_scores(X)
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, X) -> np.ndarray:
        return self.decision_scores(X) > self.threshold

    def rank(self, case: PatientCase, candidates: Sequence[Document]) -> RankedList:
        """Order candidates by relevance probability (ties by doc id)."""
        if not candidates:
            raise ValueError("no candidates to rank")
        scores = self.decision_scores([(d, case.query_sentences) for d in candidates])
        return RankedList.from_scores(case.topic_id, {d.id: float(s) for d, s in zip(candidates, scores)})

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(
            path, "rel", self.config_.to_dict(), self.model_.state_dict(),
            {"params": self.get_params(deep=False) | {"tokenizer": None},
             "vocab": self.tokenizer_.vocab, "optimizer": self.optimizer_.state_dict(),
             "step": self.step_, "history": self.history_},
        )

    def _restore(self, blob: dict) -> None:
        self.tokenizer_ = WordPieceTokenizer(blob["extra"]["vocab"])
        self.config_ = EncoderConfig(**blob["config"])
        self.model_ = RelModel(self.config_)
        self.model_.load_state_dict(blob["state"])
        self.model_.eval()
        self.optimizer_ = Adam.single(self.model_.parameters(), self.lr, beta1=self.beta1, beta2=self.beta2)
        self.optimizer_.load_state_dict(blob["extra"]["optimizer"])
        self.step_ = blob["extra"]["step"]
        self.history_ = list(blob["extra"]["history"])
        self.classes_ = np.array([False, True])

    @classmethod
    def load(cls, path) -> "RelClassifier":
        blob = load_checkpoint(path, "rel")
        est = cls(**blob["extra"]["params"])
        est._restore(blob)
        return est


def rel_rank(case: PatientCase, candidates: Sequence[Document], model: RelClassifier) -> RankedList:
    return model.rank(case, candidates)
