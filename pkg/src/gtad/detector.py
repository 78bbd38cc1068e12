"""Forecast deviations to anomaly decisions.

Scores are summed squared per-sensor deviations at each timestep. A grid
sweep over every distinct score value (plus a sentinel below the minimum)
labels points by score > threshold, point-adjusts against ground-truth
segments, and reports the best-F1 (**) and best-Recall (*) operating
points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError
from .tensor import Tensor


@dataclass
class ForecastBatch:
    predicted: Tensor  # [M, n]
    observed: Tensor  # [M, n]

    def __post_init__(self):
        if self.predicted.shape != self.observed.shape:
            raise ShapeError(f"prediction shape {self.predicted.shape} != "
                             f"observation shape {self.observed.shape}")


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    threshold: float = float("nan")
    variant: str = ""


@dataclass
class ThresholdSweep:
    thresholds: np.ndarray
    reports: list[MetricsReport]
    best_f1: MetricsReport
    best_recall: MetricsReport


def mse_loss(batch: ForecastBatch) -> Tensor:
    """Training loss: sum over timesteps of squared residual norms, over M."""
    diff = batch.predicted - batch.observed
    return (diff * diff).sum() / batch.predicted.shape[0]


def anomaly_score(predicted_t: np.ndarray, observed_t: np.ndarray) -> float:
    """Deviation level at one timestep: sum over sensors of squared error."""
    d = np.asarray(predicted_t, dtype=np.float64) - np.asarray(observed_t, dtype=np.float64)
    return float((d * d).sum())


def score_series(predicted: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Per-timestep scores for [n, M] prediction/observation arrays."""
    if predicted.shape != observed.shape:
        raise ShapeError("prediction/observation shape mismatch")
    d = predicted - observed
    return (d * d).sum(axis=-1)


def _segments(gt: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) spans of maximal ground-truth anomaly runs."""
    diffs = np.diff(np.concatenate([[0], gt, [0]]))
    starts = np.nonzero(diffs == 1)[0]
    ends = np.nonzero(diffs == -1)[0]
    return list(zip(starts, ends))


def _as_binary(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must be binary 0/1")
    return arr.astype(np.int64)


def point_adjust(gt, preds) -> np.ndarray:
    """Mark whole ground-truth segments detected if any point inside is flagged."""
    gt = _as_binary(gt, "ground truth")
    preds = _as_binary(preds, "predictions")
    if len(gt) != len(preds):
        raise ShapeError(f"length mismatch: {len(gt)} labels vs {len(preds)} predictions")
    adjusted = preds.copy()
    for start, end in _segments(gt):
        if adjusted[start:end].any():
            adjusted[start:end] = 1
    return adjusted


def compute_metrics(gt, preds, threshold: float = float("nan"),
                    variant: str = "") -> MetricsReport:
    gt = _as_binary(gt, "ground truth")
    preds = _as_binary(preds, "predictions")
    if len(gt) != len(preds):
        raise ShapeError(f"length mismatch: {len(gt)} labels vs {len(preds)} predictions")
    tp = int(((gt == 1) & (preds == 1)).sum())
    fp = int(((gt == 0) & (preds == 1)).sum())
    fn = int(((gt == 1) & (preds == 0)).sum())
    tn = int(((gt == 0) & (preds == 0)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(tp, fp, fn, tn, precision, recall, f1, threshold, variant)


def threshold_sweep(scores, gt) -> ThresholdSweep:
    """Grid search over all effective thresholds with point-adjusted metrics."""
    scores = np.asarray(scores, dtype=np.float64)
    gt = _as_binary(gt, "ground truth")
    if scores.size == 0:
        raise DataError("empty score series")
    if len(scores) != len(gt):
        raise ShapeError(f"length mismatch: {len(scores)} scores vs {len(gt)} labels")
    # sentinel below every score makes the all-anomaly labeling reachable
    thresholds = np.concatenate([[-np.inf], np.unique(scores)])
    reports = []
    for v in thresholds:
        preds = point_adjust(gt, (scores > v).astype(np.int64))
        reports.append(compute_metrics(gt, preds, threshold=float(v)))
    best_f1 = max(reports, key=lambda r: r.f1)
    best_recall = max(reports, key=lambda r: (r.recall, r.f1))
    best_f1 = MetricsReport(**{**best_f1.__dict__, "variant": "best_f1"})
    best_recall = MetricsReport(**{**best_recall.__dict__, "variant": "best_recall"})
    return ThresholdSweep(thresholds, reports, best_f1, best_recall)


def format_report(sweep: ThresholdSweep) -> str:
    lines = []
    for tag, r in (("**", sweep.best_f1), ("*", sweep.best_recall)):
        lines.append(
            f"{tag:>2} {r.variant:<12} threshold={r.threshold:.6g} "
            f"precision={r.precision:.4f} recall={r.recall:.4f} f1={r.f1:.4f} "
            f"(tp={r.tp} fp={r.fp} fn={r.fn} tn={r.tn})"
        )
    return "\n".join(lines)


def write_score_csv(path: str | Path, timestamps, scores, gt, preds) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "score", "gt_label", "pred_label"])
        for row in zip(timestamps, scores, gt, preds):
            w.writerow([int(row[0]), repr(float(row[1])), int(row[2]), int(row[3])])


def read_score_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["timestamp", "score", "gt_label", "pred_label"]:
            raise DataError(f"{path}: not a score CSV")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no score rows")
    ts = np.array([int(r[0]) for r in rows])
    scores = np.array([float(r[1]) for r in rows])
    gt = np.array([int(r[2]) for r in rows])
    preds = np.array([int(r[3]) for r in rows])
    return ts, scores, gt, preds
