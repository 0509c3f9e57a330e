"""Ranking metrics with the anomaly (label 1) as the positive class."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "PrCurve",
    "pr_curve",
    "average_precision",
    "f1_at_threshold",
    "accuracy",
    "best_f1",
    "save_curve_csv",
]


@dataclass
class PrCurve:
    """Points ordered by decreasing threshold; the first point is the
    synthetic ``(inf, 1, 0)`` start of the curve."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0/1")
    if not np.any(labels == 1):
        raise ValueError("average precision is undefined without positive labels")
    return scores, labels.astype(int)


def _counts(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct thresholds (descending) with cumulative TP and FP counts."""
    scores, labels = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(1 - labels[order])
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return s[ends], tp[ends], fp[ends]


def pr_curve(scores, labels) -> PrCurve:
    """Precision and recall at each distinct score, highest first.

    Tied scores enter together, so the curve does not depend on the order of
    equal-scored rows.
    """
    thr, tp, fp = _counts(scores, labels)
    return PrCurve(
        np.r_[np.inf, thr],
        np.r_[1.0, tp / (tp + fp)],
        np.r_[0.0, tp / tp[-1]],
    )


def average_precision(scores, labels) -> float:
    """Step-interpolated AP: sum of (R_n - R_{n-1}) * P_n with R_0 = 0."""
    _, tp, fp = _counts(scores, labels)
    gained = np.diff(np.r_[0, tp])
    p = int(tp[-1])
    # Each term is the rational g*tp / (P*(tp+fp)). Summing the rounded terms
    # together with their exact rounding residuals makes the result the
    # correctly rounded value of the rational sum.
    parts = []
    for g, t, f in zip(gained.tolist(), tp.tolist(), fp.tolist()):
        if g:
            exact = Fraction(g * t, p * (t + f))
            q = float(exact)
            parts += (q, float(exact - Fraction(q)))
    return math.fsum(parts)


def _confusion(scores, labels, threshold: float) -> tuple[int, int, int, int]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ in shape")
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    return tp, fp, fn, tn


def f1_at_threshold(scores, labels, threshold: float) -> float:
    """F1 of the anomaly class when ``score >= threshold`` flags an anomaly."""
    tp, fp, fn, _ = _confusion(scores, labels, threshold)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def accuracy(scores, labels, threshold: float) -> float:
    tp, fp, fn, tn = _confusion(scores, labels, threshold)
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("accuracy of an empty set")
    return (tp + tn) / total


def best_f1(scores, labels) -> float:
    """Maximum F1 over all curve thresholds."""
    c = pr_curve(scores, labels)
    p, r = c.precision[1:], c.recall[1:]
    denom = p + r
    f1 = np.where(denom > 0, 2 * p * r / np.where(denom > 0, denom, 1.0), 0.0)
    return float(np.max(f1))


def save_curve_csv(curve: PrCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve.points[1:]:
            w.writerow([repr(t), repr(p), repr(r)])
