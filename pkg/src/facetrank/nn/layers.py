"""Transformer building blocks (post-layer-norm, BERT layout)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

INIT_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 128
    segment_count: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        return asdict(self)


def init_weights(module: nn.Module, std: float = INIT_STD) -> None:
    """Truncated-normal weights (2 std cutoff), zero biases, unit layer norms."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Embedding)):
            nn.init.trunc_normal_(m.weight, std=std, a=-2 * std, b=2 * std)
            if isinstance(m, nn.Linear) and m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def sinusoidal_positions(n: int, dim: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(n, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div)[:, : dim // 2]
    return table


def key_mask(mask: torch.Tensor) -> torch.Tensor:
    """(B, Tk) keep-mask -> (B, 1, 1, Tk) attention mask."""
    return mask[:, None, None, :]


def causal_mask(n: int, device=None) -> torch.Tensor:
    return torch.tril(torch.ones(n, n, dtype=torch.bool, device=device))[None, None]


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query, key, value, mask=None):
        """Returns (output, weights); ``mask`` is True where attention is allowed.

        Masked weights are exactly zero.
        """
        q, k, v = self._split(self.q(query)), self._split(self.k(key)), self._split(self.v(value))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        ctx = self.dropout(weights) @ v
        b, h, t, d = ctx.shape
        return self.out(ctx.transpose(1, 2).reshape(b, t, h * d)), weights


class FeedForward(nn.Module):
    def __init__(self, dim: int, ffn_dim: int, dropout: float = 0.0):
        super().__init__()
        self.inner = nn.Linear(dim, ffn_dim)
        self.outer = nn.Linear(ffn_dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.outer(self.dropout(F.gelu(self.inner(x))))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads, dropout)
        self.attn_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask=None):
        h, _ = self.attn(x, x, x, mask)
        x = self.attn_norm(x + self.dropout(h))
        return self.ffn_norm(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    """Causal self-attention, cross-attention over the source, feed-forward."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float = 0.0):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads, dropout)
        self.self_norm = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, dropout)
        self.cross_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, memory, self_mask=None, memory_mask=None):
        h, _ = self.self_attn(x, x, x, self_mask)
        x = self.self_norm(x + self.dropout(h))
        h, cross = self.cross_attn(x, memory, memory, memory_mask)
        x = self.cross_norm(x + self.dropout(h))
        return self.ffn_norm(x + self.dropout(self.ffn(x))), cross


class Encoder(nn.Module):
    """Token + segment + learned position embeddings, then encoder layers."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        c = config
        self.tokens = nn.Embedding(c.vocab_size, c.model_dim)
        self.segments = nn.Embedding(c.segment_count, c.model_dim)
        self.positions = nn.Embedding(c.max_positions, c.model_dim)
        self.norm = nn.LayerNorm(c.model_dim)
        self.dropout = nn.Dropout(c.dropout)
        self.layers = nn.ModuleList(
            EncoderLayer(c.model_dim, c.heads, c.ffn_dim, c.dropout) for _ in range(c.layers)
        )
        init_weights(self)

    def forward(self, ids: torch.Tensor, segments: torch.Tensor, mask: torch.Tensor | None = None):
        """``ids``/``segments``: (B, T) long; ``mask``: (B, T) bool, True on real tokens."""
        t = ids.shape[1]
        if t > self.config.max_positions:
            raise ValueError(f"input of {t} tokens exceeds max_positions={self.config.max_positions}")
        if mask is None:
            mask = ids != 0
        pos = torch.arange(t, device=ids.device)[None]
        x = self.norm(self.tokens(ids) + self.segments(segments) + self.positions(pos))
        x = self.dropout(x)
        attn_mask = key_mask(mask)
        for layer in self.layers:
            x = layer(x, attn_mask)
        return x


def encode(encoder: Encoder, tokens, segments) -> torch.Tensor:
    """Contextual vectors (T, model_dim) for one unpadded sequence."""
    if len(tokens) != len(segments):
        raise ValueError("tokens and segments differ in length")
    ids = torch.as_tensor([list(tokens)], dtype=torch.long)
    seg = torch.as_tensor([list(segments)], dtype=torch.long)
    return encoder(ids, seg, torch.ones_like(ids, dtype=torch.bool))[0]
