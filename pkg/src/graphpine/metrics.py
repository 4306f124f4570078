"""Binary classification metrics with explicit handling of ties and 0/0 cases.

Zero-denominator ratios are reported as ``None`` ("undefined"), never
silently coerced to 0. Ranking metrics follow the rank-statistic
definitions: ROC-AUC counts concordant pairs with ties worth one half, and
the precision-recall summary is average precision with tied scores
processed as a single block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import EmptyInput, LengthMismatch, NoPositives, SingleClass


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation summary. ``None`` marks an undefined ratio."""

    roc_auc: Optional[float]
    pr_auc: Optional[float]
    accuracy: Optional[float]
    precision: Optional[float]
    specificity: Optional[float]
    npv: Optional[float]
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "specificity": self.specificity,
            "npv": self.npv,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }


def _check_binary(values: np.ndarray, what: str) -> None:
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{what} must be 0 or 1")


def _validate_pair(labels: Sequence[int], other: Sequence, other_name: str) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels)
    x = np.asarray(other, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise LengthMismatch(f"labels {y.shape} vs {other_name} {x.shape}")
    if y.size == 0:
        raise EmptyInput("no observations")
    _check_binary(y, "labels")
    return y.astype(np.int64), x


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks in ascending order; tied values share the mean rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share their mean
        mean_rank = (i + j + 2) / 2.0
        ranks[order[i : j + 1]] = mean_rank
        i = j + 1
    return ranks


def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Probability that a random positive outranks a random negative.

    Ties contribute one half, which makes this the normalized Mann-Whitney
    U statistic. Raises :class:`SingleClass` unless both classes appear.
    """
    y, s = _validate_pair(labels, scores, "scores")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    ranks = average_ranks(s)
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Average precision with tied scores processed as one block.

    Walks distinct score values in descending order; every positive in a
    tie block receives the precision measured at the end of that block.
    Raises :class:`NoPositives` when no positive labels are present.
    """
    y, s = _validate_pair(labels, scores, "scores")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    ap = 0.0
    tp = 0
    fp = 0
    i = 0
    n = y.size
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        block_pos = int(y_sorted[i : j + 1].sum())
        block_neg = (j - i + 1) - block_pos
        tp += block_pos
        fp += block_neg
        if block_pos:
            precision = tp / (tp + fp)
            ap += precision * (block_pos / n_pos)
        i = j + 1
    return ap


def confusion_metrics(labels: Sequence[int], preds: Sequence[int]) -> MetricsReport:
    """Confusion counts plus the derived ratios; 0/0 ratios become ``None``."""
    y, p = _validate_pair(labels, preds, "predictions")
    _check_binary(p, "predictions")
    p = p.astype(np.int64)
    tp = int(((y == 1) & (p == 1)).sum())
    fp = int(((y == 0) & (p == 1)).sum())
    tn = int(((y == 0) & (p == 0)).sum())
    fn = int(((y == 1) & (p == 0)).sum())

    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den else None

    return MetricsReport(
        roc_auc=None,
        pr_auc=None,
        accuracy=ratio(tp + tn, tp + fp + tn + fn),
        precision=ratio(tp, tp + fp),
        specificity=ratio(tn, tn + fp),
        npv=ratio(tn, tn + fn),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def compute_report(
    labels: Sequence[int],
    scores: Sequence[float],
    threshold: float = 0.5,
) -> MetricsReport:
    """Full report from probability scores; preds are ``score >= threshold``.

    Ranking metrics that cannot be computed for this label set (one class
    only, or no positives) come back as ``None`` rather than raising.
    """
    y, s = _validate_pair(labels, scores, "scores")
    preds = (s >= threshold).astype(np.int64)
    base = confusion_metrics(y, preds)
    try:
        roc: Optional[float] = roc_auc(y, s)
    except SingleClass:
        roc = None
    try:
        pr: Optional[float] = pr_auc(y, s)
    except NoPositives:
        pr = None
    return MetricsReport(
        roc_auc=roc,
        pr_auc=pr,
        accuracy=base.accuracy,
        precision=base.precision,
        specificity=base.specificity,
        npv=base.npv,
        tp=base.tp,
        fp=base.fp,
        tn=base.tn,
        fn=base.fn,
    )
