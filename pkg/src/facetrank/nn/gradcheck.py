"""Reverse-mode gradients versus central finite differences."""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def numeric_grad(fn: Callable[[], torch.Tensor], param: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central differences ``(f(x+eps) - f(x-eps)) / (2 eps)`` for every element of ``param``."""
    out = torch.zeros_like(param)
    flat = param.data.view(-1)
    grad = out.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            up = float(fn())
            flat[i] = orig - eps
            down = float(fn())
            flat[i] = orig
            grad[i] = (up - down) / (2 * eps)
    return out


def grad_check(
    fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Largest elementwise relative error between analytic and numeric gradients.

    The relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    near-zero entries from dominating. All parameters must be float64.
    """
    params = list(params)
    for p in params:
        if p.dtype != torch.float64:
            raise TypeError("gradient checks require float64 parameters")
    loss = fn()
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    worst = 0.0
    for p, a in zip(params, analytic):
        if a is None:
            a = torch.zeros_like(p)
        n = numeric_grad(fn, p, eps)
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst
