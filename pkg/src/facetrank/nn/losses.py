"""Class-weighted binary cross entropy and token-level negative log-likelihood."""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    w0: float = 1.0
    w1: float = 1.0

    def __post_init__(self):
        if self.w0 <= 0 or self.w1 <= 0:
            raise ValueError("class weights must be positive")


REL_WEIGHTS = LossWeights(w0=0.15, w1=1.0)
EXT_WEIGHTS = LossWeights(w0=0.075, w1=1.0)


def weighted_bce(p, y, weights: LossWeights = LossWeights(), mask=None) -> torch.Tensor:
    """``-w_y [y log p + (1-y) log(1-p)]`` averaged over (unmasked) elements.

    ``p`` is clamped into ``[1e-7, 1 - 1e-7]``.
    """
    p = torch.as_tensor(p)
    y = torch.as_tensor(y, dtype=p.dtype)
    p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    w = torch.where(y > 0.5, torch.full_like(y, weights.w1), torch.full_like(y, weights.w0))
    losses = -w * (y * torch.log(p) + (1.0 - y) * torch.log1p(-p))
    if mask is not None:
        m = torch.as_tensor(mask, dtype=p.dtype)
        return (losses * m).sum() / m.sum().clamp_min(1.0)
    return losses.mean()


def cross_entropy(logits, target, ignore_index: int | None = None, reduction: str = "mean") -> torch.Tensor:
    """``-log softmax(logits)[target]`` over the last axis."""
    logits = torch.as_tensor(logits)
    target = torch.as_tensor(target, dtype=torch.long)
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, target.unsqueeze(-1)).squeeze(-1)
    if ignore_index is not None:
        keep = (target != ignore_index).to(nll.dtype)
        nll = nll * keep
        if reduction == "mean":
            return nll.sum() / keep.sum().clamp_min(1.0)
    if reduction == "sum":
        return nll.sum()
    if reduction == "none":
        return nll
    return nll.mean()
