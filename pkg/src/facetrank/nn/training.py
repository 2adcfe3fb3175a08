"""Shared training plumbing: determinism, batching, logs, checkpoints."""

from __future__ import annotations

import contextlib
import csv
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

CHECKPOINT_FORMAT = "facetrank-checkpoint"
CHECKPOINT_VERSION = 1
LOG_FIELDS = ("step", "loss", "lr", "val_P", "val_R", "val_F1")


@contextlib.contextmanager
def deterministic(seed: int, threads: int = 1):
    """Seed torch and pin the intra-op thread count for the duration."""
    prev = torch.get_num_threads()
    torch.set_num_threads(threads)
    torch.manual_seed(seed)
    try:
        yield np.random.default_rng(seed)
    finally:
        torch.set_num_threads(prev)


def batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of shuffled mini-batches, reshuffled every epoch."""
    while True:
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            yield order[i : i + batch_size]


def split_validation(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if fraction <= 0 or n < 5:
        return np.arange(n), np.arange(0)
    order = rng.permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def precision_recall_f1(pred: Sequence[bool], gold: Sequence[bool]) -> tuple[float, float, float]:
    pred = np.asarray(pred, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    tp = float((pred & gold).sum())
    p = tp / pred.sum() if pred.sum() else 0.0
    r = tp / gold.sum() if gold.sum() else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


class TrainLog:
    """CSV training log: step, loss, lr, val_P, val_R, val_F1."""

    def __init__(self, path=None, append: bool = False):
        self.rows: list[dict] = []
        self.path = Path(path) if path else None
        fresh = self.path and (not append or not self.path.exists() or self.path.stat().st_size == 0)
        if fresh:
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(LOG_FIELDS)

    def record(self, step: int, loss: float, lr: float, prf=(None, None, None)) -> None:
        row = {"step": step, "loss": loss, "lr": lr, "val_P": prf[0], "val_R": prf[1], "val_F1": prf[2]}
        self.rows.append(row)
        if self.path:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow(
                    ["" if row[k] is None else (f"{row[k]:.6g}" if isinstance(row[k], float) else row[k]) for k in LOG_FIELDS]
                )


def save_checkpoint(path, kind: str, config: dict, state: dict, extra: dict | None = None) -> None:
    """Versioned header plus named parameter tensors in module declaration order."""
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": kind,
            "config": config,
            "names": list(state),
            "state": state,
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path, kind: str | None = None) -> dict:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a facetrank checkpoint")
    if blob["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {blob['version']}")
    if kind is not None and blob["kind"] != kind:
        raise ValueError(f"{path}: expected a {kind} checkpoint, found {blob['kind']}")
    return blob


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = 0) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
    return out


def run_training(
    model: torch.nn.Module,
    optimizer,
    step_fn,
    batches: Iterator[np.ndarray],
    steps: int,
    eval_fn=None,
    eval_every: int = 100,
    patience: int = 2,
    factor: float = 0.1,
    log: TrainLog | None = None,
    start_step: int = 0,
    history: list[float] | None = None,
) -> tuple[int, list[float]]:
    """Optimise for ``steps`` steps numbered from ``start_step + 1``.

    ``step_fn(batch)`` returns the scalar loss. Every ``eval_every`` steps
    ``eval_fn()`` returns ``((P, R, F1), score)``; ``score`` (higher is better,
    typically the negated validation loss) drives the plateau rule. Without an
    ``eval_fn`` the negated running training loss is used.
    """
    from .optim import plateau_fires

    history = list(history or [])
    running: list[float] = []
    step = start_step
    for step in range(start_step + 1, start_step + steps + 1):
        model.train()
        optimizer.zero_grad()
        loss = step_fn(next(batches))
        loss.backward()
        optimizer.step()
        running.append(float(loss.detach()))
        if step % eval_every == 0 or step == start_step + steps:
            prf = (None, None, None)
            mean_loss = float(np.mean(running))
            score = -mean_loss
            model.eval()
            if eval_fn is not None:
                with torch.no_grad():
                    prf, score = eval_fn()
            history.append(score)
            if plateau_fires(history, patience, "max"):
                optimizer.scale_lr(factor)
            if log is not None:
                log.record(step, mean_loss, optimizer.groups[0]["lr"], prf)
            running = []
    model.eval()
    return step, history
