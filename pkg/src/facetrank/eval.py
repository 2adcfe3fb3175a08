"""TREC-style P@k and R-Prec with grade >= 1 binarization."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import Qrels, RankedList

logger = logging.getLogger(__name__)

CSV_FIELDS = ("run_tag", "r_prec", "p_at_10", "topics")


def _judgments(ranked: RankedList, qrels: Qrels) -> dict[str, int]:
    if ranked.topic_id not in qrels:
        raise KeyError(f"topic {ranked.topic_id!r} has no relevance judgments")
    return qrels[ranked.topic_id]


def p_at_k(ranked: RankedList, qrels: Qrels, k: int = 10) -> float:
    judged = _judgments(ranked, qrels)
    hits = sum(1 for d in ranked.doc_ids[:k] if judged.get(d, 0) >= 1)
    return hits / k


def r_prec(ranked: RankedList, qrels: Qrels) -> float | None:
    """Precision at rank R; ``None`` when the topic has no relevant documents."""
    judged = _judgments(ranked, qrels)
    r = sum(1 for g in judged.values() if g >= 1)
    if r == 0:
        return None
    hits = sum(1 for d in ranked.doc_ids[:r] if judged.get(d, 0) >= 1)
    return hits / r


@dataclass
class MetricReport:
    run_tag: str
    p_at_10: dict[str, float] = field(default_factory=dict)
    r_prec: dict[str, float] = field(default_factory=dict)

    @property
    def topic_count(self) -> int:
        return len(self.p_at_10)

    @property
    def mean_p_at_10(self) -> float:
        return sum(self.p_at_10.values()) / len(self.p_at_10) if self.p_at_10 else 0.0

    @property
    def mean_r_prec(self) -> float:
        return sum(self.r_prec.values()) / len(self.r_prec) if self.r_prec else 0.0


def evaluate_run(runs: Mapping[str, RankedList] | Iterable[RankedList], qrels: Qrels, tag: str = "run") -> MetricReport:
    """Per-topic and mean metrics.

    Topics missing from the qrels are skipped with a warning; topics without
    relevant documents are excluded from both means.
    """
    lists = runs.values() if isinstance(runs, Mapping) else runs
    report = MetricReport(tag)
    for ranked in lists:
        if ranked.topic_id not in qrels:
            logger.warning("run topic %s has no judgments; skipped", ranked.topic_id)
            continue
        rp = r_prec(ranked, qrels)
        if rp is None:
            continue
        report.r_prec[ranked.topic_id] = rp
        report.p_at_10[ranked.topic_id] = p_at_k(ranked, qrels, 10)
    return report


def compare_runs(runs: Mapping[str, Mapping[str, RankedList]], qrels: Qrels) -> list[tuple[str, float, float, int]]:
    """Rows of (tag, mean R-Prec, mean P@10, topics) by P@10, then R-Prec, descending."""
    rows = []
    for tag, run in runs.items():
        rep = evaluate_run(run, qrels, tag)
        rows.append((tag, rep.mean_r_prec, rep.mean_p_at_10, rep.topic_count))
    rows.sort(key=lambda r: (-r[2], -r[1], r[0]))
    return rows


def format_table(rows) -> str:
    width = max([len("run"), *(len(r[0]) for r in rows)])
    lines = [f"{'run':<{width}}  {'R-Prec':>8}  {'P@10':>8}  {'topics':>6}"]
    for tag, rp, p10, n in rows:
        lines.append(f"{tag:<{width}}  {rp:8.4f}  {p10:8.4f}  {n:6d}")
    return "\n".join(lines)


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for tag, rp, p10, n in rows:
        writer.writerow([tag, f"{rp:.4f}", f"{p10:.4f}", n])
    return buf.getvalue()
