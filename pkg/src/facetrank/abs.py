"""Facet-conditioned abstractive pseudo-query generation.

The encoder is copied from a trained keyword extractor. The decoder reads
word-level target embeddings (optionally taken from a joint word/entity
embedding table) plus a constant segment vector and sinusoidal positions,
projects them to the model dimension and runs causal decoder layers with
cross-attention over the source. Output logits are scores against the same
target embedding matrix after a linear map back to the embedding space.

Decoding is beam search ranked by ``logprob / lp(Y) + cp(X, Y)`` with

* ``lp(Y) = ((5 + |Y|) / 6) ** alpha``
* ``cp(X, Y) = beta * sum_i log(min(sum_j p[j, i], 1))``

where ``p[j, i]`` is the head-averaged final-layer cross-attention of target
step ``j`` on source position ``i``. ``|Y|`` counts generated tokens including
the closing eos but not the bos signal.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, asdict, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from .corpus import MAX_TARGET_LEN, AbsExample, Document, Facet, FacetSignal
from .ext import KeywordExtractor, doc_sentences, pack_ext_input
from .nn import Adam, DecoderLayer, Encoder, EncoderConfig, causal_mask, init_weights, key_mask, sinusoidal_positions
from .nn.training import (
    TrainLog,
    batch_indices,
    deterministic,
    load_checkpoint,
    pad_batch,
    run_training,
    save_checkpoint,
    split_validation,
)
from .text import EOS_IDS, N_SPECIAL, SPECIAL_TOKENS, WordPieceTokenizer
from .validation import check_documents, check_nonempty

ALPHA = 0.4
BETA = 0.4
BEAM = 4
COVERAGE_FLOOR = 1e-9


# ------------------------------------------------------------------ penalties


def length_penalty(length: int, alpha: float = ALPHA) -> float:
    if length < 1:
        raise ValueError("length penalty needs |Y| >= 1")
    return ((5.0 + length) / 6.0) ** alpha


def coverage_penalty(p, beta: float = BETA) -> float:
    """``beta * sum_i log(min(sum_j p[j, i], 1))`` with a 1e-9 floor inside the log."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("attention must be a (target steps, source positions) matrix")
    acc = np.minimum(p.sum(axis=0), 1.0)
    return float(beta * np.log(np.maximum(acc, COVERAGE_FLOOR)).sum())


def hypothesis_score(logprob: float, attention, alpha: float = ALPHA, beta: float = BETA) -> float:
    attention = np.asarray(attention)
    return logprob / length_penalty(attention.shape[0], alpha) + coverage_penalty(attention, beta)


# ---------------------------------------------------------------------- model


@dataclass
class DecoderConfig:
    target_vocab_size: int
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    decoder_embed_dim: int = 64
    max_target_len: int = MAX_TARGET_LEN
    dropout: float = 0.0

    def __post_init__(self):
        if self.max_target_len < 1:
            raise ValueError("max_target_len must be >= 1")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        return asdict(self)


class AbsModel(nn.Module):
    def __init__(self, enc_config: EncoderConfig, dec_config: DecoderConfig,
                 embeddings: np.ndarray | None = None, freeze_embeddings: bool = True):
        super().__init__()
        if enc_config.model_dim != dec_config.model_dim:
            raise ValueError("encoder and decoder model_dim differ")
        c = dec_config
        self.enc_config, self.dec_config = enc_config, dec_config
        self.encoder = Encoder(enc_config)
        self.target_embed = nn.Embedding(c.target_vocab_size, c.decoder_embed_dim)
        self.segment = nn.Parameter(torch.zeros(c.decoder_embed_dim))
        self.project = nn.Linear(c.decoder_embed_dim, c.model_dim)
        self.layers = nn.ModuleList(
            DecoderLayer(c.model_dim, c.heads, c.ffn_dim, c.dropout) for _ in range(c.layers)
        )
        self.unproject = nn.Linear(c.model_dim, c.decoder_embed_dim)
        self.out_bias = nn.Parameter(torch.zeros(c.target_vocab_size))
        for m in (self.target_embed, self.project, self.layers, self.unproject):
            init_weights(m)
        nn.init.trunc_normal_(self.segment, std=0.02, a=-0.04, b=0.04)
        if embeddings is not None:
            if embeddings.shape != (c.target_vocab_size, c.decoder_embed_dim):
                raise ValueError(f"embedding matrix {embeddings.shape} does not match the target vocabulary")
            with torch.no_grad():
                self.target_embed.weight.copy_(torch.as_tensor(embeddings, dtype=torch.float32))
            self.target_embed.weight.requires_grad_(not freeze_embeddings)
        self.register_buffer(
            "positions", sinusoidal_positions(c.max_target_len + 1, c.decoder_embed_dim).float(), persistent=False
        )

    def encode(self, ids, segments, mask):
        return self.encoder(ids, segments, mask)

    def decode(self, prefix, memory, memory_mask):
        """Logits (B, T, V) and head-averaged final-layer cross-attention (B, T, S)."""
        t = prefix.shape[1]
        if t > self.positions.shape[0]:
            raise ValueError(f"target prefix of {t} exceeds max_target_len")
        x = self.target_embed(prefix) + self.segment + self.positions[:t]
        x = self.project(x)
        self_mask = causal_mask(t, prefix.device)
        mem_mask = key_mask(memory_mask)
        cross = None
        for layer in self.layers:
            x, cross = layer(x, memory, self_mask, mem_mask)
        logits = self.unproject(x) @ self.target_embed.weight.T + self.out_bias
        return logits, cross.mean(dim=1)

    def forward(self, ids, segments, mask, prefix):
        return self.decode(prefix, self.encode(ids, segments, mask), mask)


def init_encoder_from_ext(model: AbsModel, ext_model) -> None:
    """Copy the extractor's encoder weights into ``model`` (shapes must match)."""
    src = ext_model.encoder.state_dict()
    dst = model.encoder.state_dict()
    for name, tensor in src.items():
        if name not in dst or dst[name].shape != tensor.shape:
            raise ValueError(f"encoder parameter {name!r} does not match the extractor's shape")
    model.encoder.load_state_dict(src)


def param_groups(model: AbsModel, encoder_lr: float, decoder_lr: float) -> list[dict]:
    enc = [p for p in model.encoder.parameters() if p.requires_grad]
    enc_ids = {id(p) for p in model.encoder.parameters()}
    dec = [p for p in model.parameters() if p.requires_grad and id(p) not in enc_ids]
    return [
        {"name": "encoder", "params": enc, "lr": encoder_lr},
        {"name": "decoder", "params": dec, "lr": decoder_lr},
    ]


# ---------------------------------------------------------------- beam search


@dataclass
class BeamHypothesis:
    tokens: list[int]  # starts with the facet bos
    logprob: float
    attention: np.ndarray  # (|Y|, source length)
    finished: bool = False
    score: float = float("nan")

    @property
    def length(self) -> int:
        return len(self.tokens) - 1


@dataclass
class BeamRequest:
    bos_id: int
    eos_id: int
    candidates: Sequence[int]
    source_len: int
    key: object = None


# step(row_keys, prefixes) -> (log-probabilities (B, V), attention rows (B, S_max))
StepFn = Callable[[list, list[list[int]]], tuple[np.ndarray, np.ndarray]]


def _rank_key(h: BeamHypothesis):
    return (-h.score, tuple(h.tokens))


def beam_search_batch(step: StepFn, requests: Sequence[BeamRequest], beam: int = BEAM,
                      alpha: float = ALPHA, beta: float = BETA,
                      max_len: int = MAX_TARGET_LEN) -> list[list[BeamHypothesis]]:
    """Run independent beam searches in lockstep, sharing each model call.

    At every step each live hypothesis is extended by every candidate token.
    Two pools are kept, each capped at ``beam`` by penalized score: the live
    pool takes the best extensions that do not end in eos, and the finished
    pool merges every eos extension with earlier finished ones. Extensions
    reaching ``max_len`` generated tokens are finished as is. A search stops once
    it has no live hypotheses, or when ``beam`` finished ones exist and no live
    one can still beat the worst of them (cp is at most 0 and a live
    log-probability can only fall, so ``logprob / lp(max_len)`` bounds it).
    Finished hypotheses come back best first, ties by token ids.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    live: list[list[BeamHypothesis]] = [
        [BeamHypothesis([r.bos_id], 0.0, np.zeros((0, r.source_len)))] for r in requests
    ]
    done: list[list[BeamHypothesis]] = [[] for _ in requests]
    lp_max = length_penalty(max_len, alpha)
    for t in range(1, max_len + 1):
        rows = [(i, h) for i, hs in enumerate(live) for h in hs]
        if not rows:
            break
        logp, attn = step([requests[i].key for i, _ in rows], [h.tokens for _, h in rows])
        by_req: dict[int, list[int]] = {}
        for r, (i, _) in enumerate(rows):
            by_req.setdefault(i, []).append(r)
        lp = length_penalty(t, alpha)
        for i, rs in by_req.items():
            req = requests[i]
            cand = np.asarray(req.candidates, dtype=np.int64)
            # rank live prefixes lexicographically for the token-order tie-break
            rs = sorted(rs, key=lambda r: rows[r][1].tokens)
            atts, base = [], np.empty(len(rs))
            for n, r in enumerate(rs):
                h = rows[r][1]
                att = np.vstack([h.attention, attn[r, : req.source_len][None].astype(np.float64)])
                atts.append(att)
                base[n] = coverage_penalty(att, beta)
            logps = np.stack([np.asarray(logp[r], dtype=np.float64)[cand] for r in rs])
            total = np.array([rows[r][1].logprob for r in rs])[:, None] + logps
            score = total / lp + base[:, None]
            prefix_rank = np.repeat(np.arange(len(rs)), len(cand))
            flat_tok = np.tile(cand, len(rs))
            order = np.lexsort((flat_tok, prefix_rank, -score.ravel()))
            is_end = (flat_tok == req.eos_id) | (t == max_len)

            def make(flat):
                n, c = divmod(int(flat), len(cand))
                tok = int(cand[c])
                h = rows[rs[n]][1]
                return BeamHypothesis(h.tokens + [tok], float(total[n, c]), atts[n], bool(is_end[flat]),
                                      float(score[n, c]))

            done[i] = sorted(done[i] + [make(f) for f in order[is_end[order]][:beam]], key=_rank_key)[:beam]
            live[i] = [make(f) for f in order[~is_end[order]][:beam]]
            if len(done[i]) >= beam and live[i]:
                if max(h.logprob for h in live[i]) / lp_max < done[i][-1].score:
                    live[i] = []
    return [sorted(d, key=_rank_key) for d in done]


def beam_search_ids(step: StepFn, bos_id: int, eos_id: int, candidates: Sequence[int], source_len: int,
                    beam: int = BEAM, alpha: float = ALPHA, beta: float = BETA,
                    max_len: int = MAX_TARGET_LEN) -> list[BeamHypothesis]:
    req = BeamRequest(bos_id, eos_id, list(candidates), source_len)
    return beam_search_batch(step, [req], beam, alpha, beta, max_len)[0]


def model_step(model: AbsModel, memories: Mapping, ) -> StepFn:
    """Step function over ``memories[key] = (memory (S, D), mask (S,))``."""

    def step(keys, prefixes):
        mem = torch.stack([memories[k][0] for k in keys])
        mask = torch.stack([memories[k][1] for k in keys])
        prefix = torch.as_tensor(prefixes, dtype=torch.long)
        with torch.no_grad():
            logits, cross = model.decode(prefix, mem, mask)
        logp = torch.log_softmax(logits[:, -1].double(), dim=-1)
        return logp.numpy(), cross[:, -1].double().numpy()

    return step


def sequence_logprob(model: AbsModel, memory, memory_mask, tokens: Sequence[int]) -> tuple[float, np.ndarray]:
    """Teacher-forced log-probability of ``tokens[1:]`` given ``tokens[0]`` and its attention rows."""
    prefix = torch.as_tensor([list(tokens[:-1])], dtype=torch.long)
    with torch.no_grad():
        logits, cross = model.decode(prefix, memory[None], memory_mask[None])
    logp = torch.log_softmax(logits[0].double(), dim=-1)
    target = torch.as_tensor(list(tokens[1:]))
    total = float(logp.gather(1, target[:, None]).sum())
    return total, cross[0].double().numpy()


# ------------------------------------------------------------------ vocabulary


class TargetVocab:
    """Word-level decoder vocabulary; the special tokens share the encoder's ids."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:N_SPECIAL]) != SPECIAL_TOKENS:
            raise ValueError("target vocabulary must start with the special tokens")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate tokens in target vocabulary")

    @classmethod
    def build(cls, *sources: Iterable[str]) -> "TargetVocab":
        words = dict.fromkeys(w for src in sources for w in src if w not in SPECIAL_TOKENS)
        return cls(list(SPECIAL_TOKENS) + list(words))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Sequence[str]) -> list[int]:
        missing = [w for w in words if w not in self.index]
        if missing:
            raise KeyError(f"tokens outside the target vocabulary: {missing[:5]}")
        return [self.index[w] for w in words]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @property
    def content_ids(self) -> list[int]:
        return list(range(N_SPECIAL, len(self.tokens)))


# ------------------------------------------------------------------ estimator


def merge_top_two(hyps: Sequence[Sequence[str]]) -> list[str]:
    """First hypothesis in order, then tokens of the second not seen yet."""
    return list(dict.fromkeys(w for h in hyps[:2] for w in h))


class PseudoQueryGenerator(TransformerMixin, BaseEstimator):
    """Facet-conditioned pseudo-query generator.

    ``fit(X, extractor=...)`` takes ``AbsExample`` objects and a fitted
    :class:`~facetrank.ext.KeywordExtractor` whose encoder and tokenizer are
    reused. ``transform`` maps documents to ``{Facet: tokens}``.
    """

    def __init__(self, layers=2, model_dim=64, heads=4, ffn_dim=128, max_target_len=MAX_TARGET_LEN,
                 steps=2000, batch_size=12, encoder_lr=1e-4, decoder_lr=1e-3, beta1=0.9, beta2=0.999,
                 val_fraction=0.2, eval_every=100, patience=2, factor=0.1, dropout=0.0,
                 beam=BEAM, alpha=ALPHA, beta=BETA, facets=tuple(Facet), freeze_embeddings=False,
                 decode_batch=8, seed=0, log_path=None):
        self.layers = layers
        self.model_dim = model_dim
        self.heads = heads
        self.ffn_dim = ffn_dim
        self.max_target_len = max_target_len
        self.steps = steps
        self.batch_size = batch_size
        self.encoder_lr = encoder_lr
        self.decoder_lr = decoder_lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.val_fraction = val_fraction
        self.eval_every = eval_every
        self.patience = patience
        self.factor = factor
        self.dropout = dropout
        self.beam = beam
        self.alpha = alpha
        self.beta = beta
        self.facets = facets
        self.freeze_embeddings = freeze_embeddings
        self.decode_batch = decode_batch
        self.seed = seed
        self.log_path = log_path

    # -------------------------------------------------------------- training

    def _source(self, doc: Document):
        return pack_ext_input(doc_sentences(doc), self.tokenizer_, self.enc_config_.max_positions)

    def fit(self, X: Sequence[AbsExample], y=None, extractor: KeywordExtractor | None = None,
            embeddings=None, resume: dict | None = None):
        """Train on ``AbsExample`` objects.

        ``embeddings`` is an optional :class:`~facetrank.embed.EmbeddingTable`;
        its vocabulary joins the target vocabulary and its vectors become the
        decoder's target embeddings.
        """
        X = check_nonempty(X)
        for i, ex in enumerate(X):
            if not isinstance(ex, AbsExample):
                raise TypeError(f"item {i}: expected AbsExample, got {type(ex).__name__}")
        if resume is not None:
            self._restore(resume)
        else:
            if extractor is None:
                raise ValueError("the encoder is initialized from a trained keyword extractor; pass extractor=")
            check_is_fitted(extractor, "model_")
            self.tokenizer_ = extractor.tokenizer_
            self.enc_config_ = copy.deepcopy(extractor.config_)
            if self.enc_config_.model_dim != self.model_dim:
                raise ValueError("decoder model_dim must equal the extractor's model_dim")
            table_tokens = embeddings.tokens if embeddings is not None else []
            self.vocab_ = TargetVocab.build(table_tokens, (w for ex in X for w in ex.target_tokens))
            matrix = embeddings.matrix_for(self.vocab_.tokens) if embeddings is not None else None
            self.dec_config_ = DecoderConfig(
                target_vocab_size=len(self.vocab_), layers=self.layers, model_dim=self.model_dim,
                heads=self.heads, ffn_dim=self.ffn_dim,
                decoder_embed_dim=embeddings.dim if embeddings is not None else self.model_dim,
                max_target_len=self.max_target_len, dropout=self.dropout,
            )

        sources: dict[str, object] = {}
        for ex in X:
            if ex.doc.id not in sources:
                sources[ex.doc.id] = self._source(ex.doc)
        targets = [
            [ex.signal.bos_id] + self.vocab_.encode(ex.target_tokens) + [ex.signal.eos_id] for ex in X
        ]

        def batch_loss(idx):
            src = [sources[X[i].doc.id] for i in idx]
            ids = pad_batch([s.ids for s in src])
            seg = pad_batch([s.segments for s in src])
            tgt = pad_batch([targets[i] for i in idx])
            logits, _ = self.model_(ids, seg, ids != 0, tgt[:, :-1])
            gold = tgt[:, 1:]
            logp = torch.log_softmax(logits, dim=-1)
            nll = -logp.gather(-1, gold[..., None]).squeeze(-1) * (gold != 0)
            return nll.sum(dim=1).mean(), logits, gold

        with deterministic(self.seed) as rng:
            if resume is None:
                self.model_ = AbsModel(self.enc_config_, self.dec_config_, matrix, self.freeze_embeddings)
                init_encoder_from_ext(self.model_, extractor.model_)
                self.optimizer_ = Adam(param_groups(self.model_, self.encoder_lr, self.decoder_lr), self.beta1, self.beta2)
                self.step_, self.history_ = 0, []
            train_idx, val_idx = split_validation(len(X), self.val_fraction, rng)

            def step_fn(batch):
                return batch_loss(train_idx[batch])[0]

            def eval_fn():
                loss, logits, gold = batch_loss(val_idx)
                pred = logits.argmax(-1).numpy()
                gold = gold.numpy()
                tp = n_pred = n_gold = 0
                for p_row, g_row in zip(pred, gold):
                    g_set = set(g_row[g_row != 0].tolist())
                    p_set = set(p_row[g_row != 0].tolist())
                    tp += len(p_set & g_set)
                    n_pred += len(p_set)
                    n_gold += len(g_set)
                p = tp / n_pred if n_pred else 0.0
                r = tp / n_gold if n_gold else 0.0
                f = 2 * p * r / (p + r) if p + r else 0.0
                return (p, r, f), -float(loss)

            log = TrainLog(self.log_path, append=resume is not None)
            self.step_, self.history_ = run_training(
                self.model_, self.optimizer_, step_fn,
                batch_indices(len(train_idx), self.batch_size, rng), self.steps,
                eval_fn if len(val_idx) else None, self.eval_every, self.patience, self.factor,
                log, self.step_, self.history_,
            )
            self.log_ = log.rows
        return self

    def perplexity(self, X: Sequence[AbsExample]) -> float:
        """Teacher-forced per-token perplexity (eos included, bos excluded)."""
        check_is_fitted(self, "model_")
        total, count = 0.0, 0
        self.model_.eval()
        for ex in X:
            src = self._source(ex.doc)
            mem = self._memory(src)
            tokens = [ex.signal.bos_id] + self.vocab_.encode(ex.target_tokens) + [ex.signal.eos_id]
            lp, _ = sequence_logprob(self.model_, *mem, tokens)
            total += lp
            count += len(tokens) - 1
        return math.exp(-total / count)

    # ------------------------------------------------------------ generation

    def _memory(self, src):
        ids = torch.as_tensor([src.ids])
        seg = torch.as_tensor([src.segments])
        with torch.no_grad():
            mem = self.model_.encode(ids, seg, ids != 0)[0]
        return mem, torch.ones(len(src.ids), dtype=torch.bool)

    def _candidates(self, facet: Facet) -> list[int]:
        return self.vocab_.content_ids + [EOS_IDS[facet]]

    def beam_search(self, doc: Document, facet: Facet, beam: int | None = None) -> list[BeamHypothesis]:
        check_is_fitted(self, "model_")
        src = self._source(doc)
        memories = {0: self._memory(src)}
        sig = FacetSignal(Facet(facet))
        req = BeamRequest(sig.bos_id, sig.eos_id, self._candidates(Facet(facet)), len(src.ids), 0)
        self.model_.eval()
        return beam_search_batch(model_step(self.model_, memories), [req], beam or self.beam,
                                 self.alpha, self.beta, self.max_target_len)[0]

    def _words(self, hyp: BeamHypothesis) -> list[str]:
        return [w for w in self.vocab_.decode(hyp.tokens[1:]) if w not in SPECIAL_TOKENS]

    def generate(self, docs: Sequence[Document], facets=None) -> list[dict[Facet, list[str]]]:
        """Merged top-two hypotheses per facet for each document."""
        check_is_fitted(self, "model_")
        facets = [Facet(f) for f in (self.facets if facets is None else facets)]
        self.model_.eval()
        out: list[dict[Facet, list[str]]] = []
        for start in range(0, len(docs), self.decode_batch):
            chunk = docs[start : start + self.decode_batch]
            memories, requests = {}, []
            width = 0
            srcs = [self._source(d) for d in chunk]
            width = max(len(s.ids) for s in srcs)
            for j, src in enumerate(srcs):
                mem, mask = self._memory(src)
                pad = width - mem.shape[0]
                memories[j] = (
                    torch.nn.functional.pad(mem, (0, 0, 0, pad)),
                    torch.nn.functional.pad(mask, (0, pad), value=False),
                )
                for f in facets:
                    requests.append(BeamRequest(f.signal.bos_id, f.signal.eos_id, self._candidates(f), len(src.ids), j))
            results = beam_search_batch(model_step(self.model_, memories), requests, self.beam,
                                        self.alpha, self.beta, self.max_target_len)
            for j in range(len(chunk)):
                per = results[j * len(facets) : (j + 1) * len(facets)]
                out.append({f: merge_top_two([self._words(h) for h in hyps]) for f, hyps in zip(facets, per)})
        return out

    def transform(self, X) -> list[dict[Facet, list[str]]]:
        return self.generate(check_documents(X))

    def cross_attention(self, doc: Document, facet: Facet) -> tuple[list[str], list[str], np.ndarray]:
        """Source tokens, generated tokens and the attention matrix of the best hypothesis."""
        src = self._source(doc)
        best = self.beam_search(doc, facet)[0]
        return list(src.pieces), self.vocab_.decode(best.tokens[1:]), best.attention

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        params = self.get_params(deep=False)
        params["facets"] = [int(f) for f in params["facets"]]
        save_checkpoint(
            path, "abs", {"encoder": self.enc_config_.to_dict(), "decoder": self.dec_config_.to_dict()},
            self.model_.state_dict(),
            {"params": params, "wordpieces": self.tokenizer_.vocab, "targets": self.vocab_.tokens,
             "optimizer": self.optimizer_.state_dict(), "step": self.step_, "history": self.history_,
             "frozen": not self.model_.target_embed.weight.requires_grad},
        )

    def _restore(self, blob: dict) -> None:
        extra = blob["extra"]
        self.tokenizer_ = WordPieceTokenizer(extra["wordpieces"])
        self.vocab_ = TargetVocab(extra["targets"])
        self.enc_config_ = EncoderConfig(**blob["config"]["encoder"])
        self.dec_config_ = DecoderConfig(**blob["config"]["decoder"])
        self.model_ = AbsModel(self.enc_config_, self.dec_config_)
        self.model_.target_embed.weight.requires_grad_(not extra["frozen"])
        self.model_.load_state_dict(blob["state"])
        self.model_.eval()
        self.optimizer_ = Adam(param_groups(self.model_, self.encoder_lr, self.decoder_lr), self.beta1, self.beta2)
        self.optimizer_.load_state_dict(extra["optimizer"])
        self.step_ = extra["step"]
        self.history_ = list(extra["history"])

    @classmethod
    def load(cls, path) -> "PseudoQueryGenerator":
        blob = load_checkpoint(path, "abs")
        params = dict(blob["extra"]["params"])
        params["facets"] = tuple(Facet(f) for f in params["facets"])
        est = cls(**params)
        est._restore(blob)
        return est


def generate_faceted_summaries(doc: Document, generator: PseudoQueryGenerator, facets=tuple(Facet)) -> dict[Facet, list[str]]:
    return generator.generate([doc], facets)[0]


def export_cross_attention(doc: Document, facet: Facet, generator: PseudoQueryGenerator, path) -> None:
    """CSV: one row per generated step, first column the token, then one column per source piece."""
    source, generated, att = generator.cross_attention(doc, facet)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["target"] + source)
        for tok, row in zip(generated, att):
            w.writerow([tok] + [f"{v:.9g}" for v in row])


def write_generations(rows: Iterable[tuple[str, Facet, Sequence[str]]], path) -> None:
    """Generation dump: ``doc_id<TAB>facet<TAB>space-separated tokens``."""
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, facet, tokens in rows:
            f.write(f"{doc_id}\t{int(facet)}\t{' '.join(tokens)}\n")


def read_generations(path) -> dict[str, dict[Facet, list[str]]]:
    out: dict[str, dict[Facet, list[str]]] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            doc_id, facet, tokens = (line.rstrip("\n").split("\t") + [""])[:3]
            out.setdefault(doc_id, {})[Facet(int(facet))] = tokens.split()
    return out
