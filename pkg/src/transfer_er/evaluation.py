"""Threshold metrics: confusion counts, precision/recall curves and bands.

Scores are compared to a threshold ``tau``; a score equal to the threshold
counts as a predicted match. Labels are +1/-1.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import SourcePair

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredExample:
    score: float
    y: int
    pair: SourcePair | None = None


def as_arrays(scored) -> tuple[np.ndarray, np.ndarray]:
    """Turn a list of ``ScoredExample`` (or a ``(scores, labels)`` pair) into arrays."""
    if isinstance(scored, tuple) and len(scored) == 2:
        s, y = scored
    else:
        s = [e.score for e in scored]
        y = [e.y for e in scored]
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    y = np.where(y == 0, -1.0, y)
    return s, y


def predict(scores, tau: float = 0.0) -> np.ndarray:
    return np.where(np.asarray(scores) - tau >= 0, 1, -1)


def confusion(scores, labels, tau: float = 0.0) -> tuple[int, int, int, int]:
    """``(TP, FP, FN, TN)`` at threshold ``tau``."""
    s, y = as_arrays((scores, labels))
    pos = s - tau >= 0
    truth = y > 0
    tp = int(np.sum(pos & truth))
    fp = int(np.sum(pos & ~truth))
    fn = int(np.sum(~pos & truth))
    return tp, fp, fn, len(s) - tp - fp - fn


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    # 0/0 conventions: nothing predicted -> P = 1; nothing to find -> R = 1
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    return p, r


def test_error(scores, labels, tau: float = 0.0) -> float:
    s, y = as_arrays((scores, labels))
    if len(s) == 0:
        raise ValueError("test error of an empty set")
    return float(np.mean(predict(s, tau) != y))


@dataclass(frozen=True)
class PRCurve:
    """One point per distinct score, thresholds descending (recall ascending)."""

    tau: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __len__(self):
        return len(self.tau)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "precision", "recall", "tp", "fp", "fn"])
            for row in zip(self.tau, self.precision, self.recall, self.tp, self.fp, self.fn):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                            int(row[3]), int(row[4]), int(row[5])])


def pr_curve(scores, labels) -> PRCurve:
    s, y = as_arrays((scores, labels))
    if len(s) == 0:
        raise ValueError("PR curve of an empty set")
    n_pos = int(np.sum(y > 0))
    if n_pos == 0:
        raise ValueError("PR curve needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp_cum = np.cumsum(y > 0)
    fp_cum = np.cumsum(y < 0)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp = tp_cum[last], fp_cum[last]
    fn = n_pos - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return PRCurve(s[last], precision, recall, tp, fp, fn)


def precision_at_recall(curve: PRCurve, r0: float, warn: bool = True) -> float:
    """Best precision among curve points with recall >= ``r0``; 0 if none."""
    if not 0 < r0 <= 1:
        raise ValueError("target recall must lie in (0, 1]")
    ok = curve.recall >= r0 - 1e-12
    if not np.any(ok):
        if warn:
            warnings.warn(f"no curve point reaches recall {r0}", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(curve.precision[ok].max())


@dataclass(frozen=True)
class BandedCurve:
    recall: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["recall", "mean_precision", "lo", "hi"])
            for row in zip(self.recall, self.mean, self.lo, self.hi):
                w.writerow([repr(float(v)) for v in row])


def _precision_matrix(curves, recall_grid):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.array([[precision_at_recall(c, r) for r in recall_grid] for c in curves])


def band_curves(curves: Sequence[PRCurve], recall_grid, z: float = 1.96) -> BandedCurve:
    """Pointwise mean precision +- ``z`` standard errors across trials."""
    if len(curves) < 2:
        raise ValueError("bands need at least two trials")
    grid = np.asarray(recall_grid, dtype=np.float64)
    P = _precision_matrix(curves, grid)
    mean = P.mean(axis=0)
    half = z * P.std(axis=0) / np.sqrt(len(curves))
    return BandedCurve(grid, mean, mean - half, mean + half)


def bootstrap_band(scores, labels, recall_grid, n_resamples: int = 200, seed: int = 0,
                   level: float = 0.95) -> BandedCurve:
    """Percentile bootstrap band for a single scored test set."""
    s, y = as_arrays((scores, labels))
    rng = np.random.default_rng(seed)
    grid = np.asarray(recall_grid, dtype=np.float64)
    curves = []
    for _ in range(n_resamples):
        idx = rng.integers(0, len(s), len(s))
        if np.any(y[idx] > 0):
            curves.append(pr_curve(s[idx], y[idx]))
    P = _precision_matrix(curves, grid)
    alpha = (1 - level) / 2
    base = pr_curve(s, y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.array([precision_at_recall(base, r) for r in grid])
    lo = np.minimum(np.quantile(P, alpha, axis=0), mean)
    hi = np.maximum(np.quantile(P, 1 - alpha, axis=0), mean)
    return BandedCurve(grid, mean, lo, hi)
