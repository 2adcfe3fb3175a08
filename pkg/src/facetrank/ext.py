"""Token-level keyword extraction.

The document is fed as ``[CLS]`` followed by its wordpieces with no ``[SEP]``
delimiters; sentence boundaries survive only through the alternating segment
ids. A linear head gives each piece a logit for "this word occurs in the
query". Word-level scores are read off the first piece of each word.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._encoding import fit_tokenizer, make_encoder_config
from .corpus import Document, ExtExample
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
from .text import CLS, SPECIAL_TOKENS, WordPieceTokenizer, index_tokenize, split_sentences
from .validation import check_documents, check_nonempty

_SPECIAL = frozenset(SPECIAL_TOKENS)


@dataclass
class ExtInput:
    """Encoder input for one document plus the piece-to-word alignment."""

    pieces: list[str]
    ids: list[int]
    segments: list[int]
    words: list[str]
    word_starts: list[int]  # sequence position of each kept word's first piece
    owner: list[int]  # word index per position, -1 for CLS

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class TokenScores:
    tokens: list[str]
    logits: list[float]

    def __post_init__(self):
        if len(self.tokens) != len(self.logits):
            raise ValueError("tokens and logits differ in length")

    @property
    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-np.asarray(self.logits, dtype=np.float64)))


def doc_sentences(doc: Document) -> list[list[str]]:
    return [w for w in (index_tokenize(s) for s in split_sentences(doc.text)) if w]


def pack_ext_input(sentences: Sequence[Sequence[str]], tokenizer: WordPieceTokenizer,
                   max_len: int = 384) -> ExtInput:
    """``[CLS]`` + wordpieces of each sentence, segments alternating per sentence.

    Pieces beyond ``max_len`` are dropped; a word cut mid-way is dropped whole.
    """
    pieces, segments, owner = [CLS], [0], [-1]
    words: list[str] = []
    starts: list[int] = []
    for s, sent in enumerate(sentences):
        for w in sent:
            wp = tokenizer.tokenize_word(w)
            if len(pieces) + len(wp) > max_len:
                break
            starts.append(len(pieces))
            pieces += wp
            segments += [s % 2] * len(wp)
            owner += [len(words)] * len(wp)
            words.append(w)
        else:
            continue
        break
    return ExtInput(pieces, tokenizer.convert_tokens_to_ids(pieces), segments, words, starts, owner)


class ExtModel(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.encoder = Encoder(config)
        self.head = nn.Linear(config.model_dim, 1)
        nn.init.trunc_normal_(self.head.weight, std=0.02, a=-0.04, b=0.04)
        nn.init.zeros_(self.head.bias)

    def forward(self, ids, segments, mask=None):
        return self.head(self.encoder(ids, segments, mask)).squeeze(-1)


def collate(inputs: Sequence[ExtInput]):
    ids = pad_batch([x.ids for x in inputs])
    return ids, pad_batch([x.segments for x in inputs]), ids != 0


def ext_forward(packed: ExtInput, model: ExtModel) -> TokenScores:
    """Per-piece logits; the ``[CLS]`` position is included and ignored downstream."""
    model.eval()
    with torch.no_grad():
        ids, seg, mask = collate([packed])
        logits = model(ids, seg, mask)[0].double().tolist()
    return TokenScores(list(packed.pieces), logits)


def word_scores(packed: ExtInput, piece_logits: Sequence[float]) -> TokenScores:
    return TokenScores(list(packed.words), [float(piece_logits[i]) for i in packed.word_starts])


def select_keywords(scores: TokenScores, threshold: float = 0.5) -> list[str]:
    """Distinct tokens whose sigmoid score exceeds ``threshold``, in first-occurrence order."""
    keep = scores.probabilities > threshold
    out = [t for t, k in zip(scores.tokens, keep) if k and t not in _SPECIAL]
    return list(dict.fromkeys(out))


def export_token_heatmap(scores: TokenScores, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["position", "token", "score"])
        for i, (t, p) in enumerate(zip(scores.tokens, scores.probabilities)):
            w.writerow([i, t, f"{p:.9g}"])


def _example_sentences(ex: ExtExample) -> list[list[str]]:
    if ex.doc is not None:
        sents = doc_sentences(ex.doc)
        if [w for s in sents for w in s] == list(ex.tokens):
            return sents
    return [list(ex.tokens)]


class KeywordExtractor(TransformerMixin, BaseEstimator):
    """Extractive keyword model.

    ``fit`` takes ``ExtExample`` objects; ``transform`` maps documents to
    their keyword lists.
    """

    def __init__(self, layers=2, model_dim=64, heads=4, ffn_dim=128, max_len=128,
                 steps=2000, batch_size=12, lr=1e-3, beta1=0.9, beta2=0.999, w0=0.075, w1=1.0,
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

    def _targets(self, packed: ExtInput, labels: Sequence[bool]) -> torch.Tensor:
        return torch.tensor([0.0] + [float(labels[o]) for o in packed.owner[1:]])

    def fit(self, X: Sequence[ExtExample], y=None, resume: dict | None = None):
        X = check_nonempty(X)
        for i, ex in enumerate(X):
            if not isinstance(ex, ExtExample):
                raise TypeError(f"item {i}: expected ExtExample, got {type(ex).__name__}")
        sentences = [_example_sentences(ex) for ex in X]
        if resume is not None:
            self._restore(resume)
        else:
            self.tokenizer_ = self.tokenizer or fit_tokenizer(
                [" ".join(ex.tokens) for ex in X], self.vocab_size
            )
            self.config_ = make_encoder_config(self, len(self.tokenizer_))
        packed = [pack_ext_input(s, self.tokenizer_, self.max_len) for s in sentences]
        targets = [self._targets(p, ex.labels) for p, ex in zip(packed, X)]
        weights = LossWeights(self.w0, self.w1)

        def batch_loss(idx, model):
            ids, seg, mask = collate([packed[i] for i in idx])
            y = torch.zeros(ids.shape)
            for r, i in enumerate(idx):
                y[r, : len(targets[i])] = targets[i]
            loss_mask = mask.clone()
            loss_mask[:, 0] = False  # CLS carries no label
            p = torch.sigmoid(model(ids, seg, mask))
            return weighted_bce(p, y, weights, loss_mask), p, y, loss_mask

        with deterministic(self.seed) as rng:
            if resume is None:
                self.model_ = ExtModel(self.config_)
                self.optimizer_ = Adam.single(self.model_.parameters(), self.lr, beta1=self.beta1, beta2=self.beta2)
                self.step_, self.history_ = 0, []
            train_idx, val_idx = split_validation(len(packed), self.val_fraction, rng)

            def step_fn(batch):
                return batch_loss(train_idx[batch], self.model_)[0]

            def eval_fn():
                loss, p, y, m = batch_loss(val_idx, self.model_)
                m = m.numpy()
                prf = precision_recall_f1((p.numpy() > self.threshold)[m], (y.numpy() > 0.5)[m])
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

    def pack(self, doc: Document) -> ExtInput:
        check_is_fitted(self, "model_")
        return pack_ext_input(doc_sentences(doc), self.tokenizer_, self.max_len)

    def score(self, doc: Document) -> TokenScores:
        """Word-level scores (first-piece logits) for one document."""
        packed = self.pack(doc)
        return word_scores(packed, ext_forward(packed, self.model_).logits)

    def score_tokens(self, tokens: Sequence[str]) -> TokenScores:
        check_is_fitted(self, "model_")
        packed = pack_ext_input([list(tokens)], self.tokenizer_, self.max_len)
        return word_scores(packed, ext_forward(packed, self.model_).logits)

    def transform(self, X) -> list[list[str]]:
        docs = check_documents(X)
        return [select_keywords(self.score(d), self.threshold) for d in docs]

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(
            path, "ext", self.config_.to_dict(), self.model_.state_dict(),
            {"params": self.get_params(deep=False) | {"tokenizer": None},
             "vocab": self.tokenizer_.vocab, "optimizer": self.optimizer_.state_dict(),
             "step": self.step_, "history": self.history_},
        )

    def _restore(self, blob: dict) -> None:
        self.tokenizer_ = WordPieceTokenizer(blob["extra"]["vocab"])
        self.config_ = EncoderConfig(**blob["config"])
        self.model_ = ExtModel(self.config_)
        self.model_.load_state_dict(blob["state"])
        self.model_.eval()
        self.optimizer_ = Adam.single(self.model_.parameters(), self.lr, beta1=self.beta1, beta2=self.beta2)
        self.optimizer_.load_state_dict(blob["extra"]["optimizer"])
        self.step_ = blob["extra"]["step"]
        self.history_ = list(blob["extra"]["history"])

    @classmethod
    def load(cls, path) -> "KeywordExtractor":
        blob = load_checkpoint(path, "ext")
        est = cls(**blob["extra"]["params"])
        est._restore(blob)
        return est
