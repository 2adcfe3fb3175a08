"""Adam with parameter groups and a reduce-on-plateau learning-rate rule."""

from __future__ import annotations

import math
from typing import Sequence

import torch


def adam_step(param: torch.Tensor, grad: torch.Tensor, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update of ``param`` in place (no weight decay).

    ``state`` holds ``step``, ``m`` and ``v`` and is updated in place.
    """
    if param.shape != grad.shape:
        raise ValueError(f"shape mismatch {tuple(param.shape)} vs {tuple(grad.shape)}")
    if not state:
        state["step"] = 0
        state["m"] = torch.zeros_like(param)
        state["v"] = torch.zeros_like(param)
    state["step"] += 1
    t = state["step"]
    m, v = state["m"], state["v"]
    m.mul_(beta1).add_(grad, alpha=1 - beta1)
    v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    param.sub_(lr * m_hat / (v_hat.sqrt() + eps))


class Adam:
    """Minimal Adam over named parameter groups, each with its own lr."""

    def __init__(self, groups: Sequence[dict], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.groups = [dict(g, params=list(g["params"])) for g in groups]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict[int, dict] = {}

    @classmethod
    def single(cls, params, lr: float, **kw) -> "Adam":
        return cls([{"name": "all", "params": params, "lr": lr}], **kw)

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g["params"]:
                p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        for g in self.groups:
            for p in g["params"]:
                if p.grad is None:
                    continue
                adam_step(p, p.grad, self.state.setdefault(id(p), {}), g["lr"],
                          self.beta1, self.beta2, self.eps)

    def scale_lr(self, factor: float) -> None:
        for g in self.groups:
            g["lr"] *= factor

    @property
    def lrs(self) -> dict[str, float]:
        return {g.get("name", str(i)): g["lr"] for i, g in enumerate(self.groups)}

    def state_dict(self) -> dict:
        order = [p for g in self.groups for p in g["params"]]
        return {
            "lrs": [g["lr"] for g in self.groups],
            "state": [
                {k: (v.clone() if torch.is_tensor(v) else v) for k, v in self.state[id(p)].items()}
                if id(p) in self.state else {}
                for p in order
            ],
        }

    def load_state_dict(self, sd: dict) -> None:
        for g, lr in zip(self.groups, sd["lrs"]):
            g["lr"] = lr
        order = [p for g in self.groups for p in g["params"]]
        for p, st in zip(order, sd["state"]):
            if st:
                self.state[id(p)] = {k: (v.clone() if torch.is_tensor(v) else v) for k, v in st.items()}


def _improved(value: float, best: float, mode: str) -> bool:
    return value > best if mode == "max" else value < best


def plateau_fires(history: Sequence[float], patience: int = 2, mode: str = "max") -> bool:
    """Whether the rule fires at the last entry of ``history``.

    The rule fires once ``patience`` consecutive evaluations fail to beat the
    best value; the counter restarts after each firing and after every
    improvement.
    """
    if not history:
        raise ValueError("plateau rule needs at least one evaluation")
    best = -math.inf if mode == "max" else math.inf
    bad = 0
    fired = False
    for value in history:
        fired = False
        if _improved(value, best, mode):
            best = value
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                fired = True
                bad = 0
    return fired


def plateau_schedule(history: Sequence[float], lr: float, factor: float = 0.1,
                     patience: int = 2, mode: str = "max") -> float:
    return lr * factor if plateau_fires(history, patience, mode) else lr
