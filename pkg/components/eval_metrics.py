"""
Confusion counts, ROC curves and AUC for signal/noise classifiers.

Signal is the positive class. Decisions are "signal iff score >= threshold", so a
curve built from descending thresholds is monotone in both coordinates.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from components.dvs_events import Label
from utils.output import Output

out = Output(__name__)


class MetricsError(ValueError):
    """Length mismatch, unlabeled entries or a single-class evaluation set."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def n_positive(self) -> int:
        return self.tp + self.fn

    @property
    def n_negative(self) -> int:
        return self.fp + self.tn

    @property
    def tpr(self) -> float:
        return self.tp / self.n_positive if self.n_positive else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / self.n_negative if self.n_negative else 0.0

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.size and np.any((labels != Label.NOISE) & (labels != Label.SIGNAL)):
        raise MetricsError("Labels must be signal (1) or noise (0); found unlabeled entries")
    return labels == Label.SIGNAL


def confusion(predictions, labels) -> ConfusionCounts:
    """Contingency table of boolean (or Label) predictions against labels."""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.shape != labels.shape:
        raise MetricsError(
            f"{len(predictions)} predictions for {len(labels)} labels"
        )
    positive = _check_labels(labels)
    if predictions.dtype == bool:
        predicted = predictions
    else:
        predicted = predictions == Label.SIGNAL
    return ConfusionCounts(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def merge_counts(shards) -> ConfusionCounts:
    total = ConfusionCounts()
    for shard in shards:
        total = total + shard
    return total


@dataclass(frozen=True)
class RocCurve:
    """
    Operating points sorted by fpr, anchored at (0, 0) and (1, 1).

    ``thresholds[i]`` produced ``points[i]``; anchors added by ``from_points`` carry NaN.
    """

    points: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        thresholds = np.asarray(self.thresholds, dtype=np.float64).reshape(-1)
        if len(points) != len(thresholds):
            raise MetricsError("One threshold per ROC point is required")
        if np.any((points < 0) | (points > 1)):
            raise MetricsError("ROC coordinates must lie in [0, 1]")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "thresholds", thresholds)

    @property
    def fpr(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def tpr(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def auc(self) -> float:
        return auc(self)

    @classmethod
    def from_points(cls, points, thresholds=None) -> "RocCurve":
        """Curve through per-parameter operating points (e.g. one per tau)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if thresholds is None:
            thresholds = np.full(len(points), np.nan)
        thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
        points = np.vstack([[0.0, 0.0], points, [1.0, 1.0]])
        thresholds = np.concatenate([[np.nan], thresholds, [np.nan]])
        order = np.lexsort((points[:, 1], points[:, 0]))
        return cls(points[order], thresholds[order])


def roc_from_scores(scores, labels) -> RocCurve:
    """ROC at every distinct score, highest first, plus a +inf sentinel at (0, 0)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = _check_labels(labels)
    if scores.shape != positive.shape:
        raise MetricsError(f"{len(scores)} scores for {len(positive)} labels")
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError(
            f"ROC needs both classes, got {n_pos} signal and {n_neg} noise samples"
        )

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(~sorted_pos)
    # last index of every tie group: equal scores cross the threshold together
    group_end = np.flatnonzero(np.diff(sorted_scores, append=-np.inf) != 0)

    fpr = np.concatenate([[0.0], fp[group_end] / n_neg])
    tpr = np.concatenate([[0.0], tp[group_end] / n_pos])
    thresholds = np.concatenate([[np.inf], sorted_scores[group_end]])
    return RocCurve(np.column_stack([fpr, tpr]), thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve's points."""
    fpr, tpr = curve.fpr, curve.tpr
    if len(fpr) < 2:
        return 0.0
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) * 0.5))


def write_roc_csv(curve: RocCurve, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write("threshold,fpr,tpr\n")
        for threshold, (fpr, tpr) in zip(curve.thresholds, curve.points):
            handle.write(f"{float(threshold)!r},{float(fpr)!r},{float(tpr)!r}\n")
    out.log_only(f"Wrote ROC with {len(curve.points)} points to {path}")


def write_summary_json(path, auc_value: float, counts: ConfusionCounts | None = None, **extra) -> None:
    summary = {"auc": float(auc_value)}
    if counts is not None:
        summary["counts"] = asdict(counts)
        summary["tpr"] = counts.tpr
        summary["fpr"] = counts.fpr
    summary.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    out.log_only(f"Wrote summary (auc={auc_value:.4f}) to {path}")
