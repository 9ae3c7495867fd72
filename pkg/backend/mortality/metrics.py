"""
Confusion-matrix metrics, ROC/AUC and the BER-minimizing threshold search.

Decision rule everywhere: predict positive when score >= threshold.
"""

# Standard library imports
from dataclasses import dataclass
from typing import Sequence, Tuple

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Local application imports
from .errors import DataError

METRIC_NAMES = ("accuracy", "auc", "specificity", "sensitivity", "ber")


class ConfusionMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    tn: int = Field(ge=0)
    fn: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp


class MetricSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float
    sensitivity: float
    specificity: float
    ber: float


class ThresholdChoice(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float
    ber: float
    sensitivity: float
    specificity: float

    @model_validator(mode="after")
    def _ber_consistent(self):
        if abs(self.ber - (1.0 - (self.sensitivity + self.specificity) / 2.0)) > 1e-12:
            raise ValueError("ber must equal 1 - (sensitivity + specificity) / 2")
        return self


@dataclass(frozen=True)
class RocCurve:
    """Points from (0, 0) to (1, 1); thresholds[i] generates point i (inf for the origin)"""
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def points(self) -> Sequence[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _aligned(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"Scores and labels are not aligned ({s.shape} vs {y.shape})")
    if s.size == 0:
        raise DataError("Scores and labels are empty")
    if not np.isin(y, (0, 1)).all():
        raise DataError("Labels must be 0 or 1")
    return s, y.astype(np.int64)


def _both_classes(y: np.ndarray):
    if y.min() == y.max():
        raise DataError(f"Metric undefined: labels contain a single class ({int(y[0])})")


def confusion_at_threshold(scores: Sequence[float], labels: Sequence[int], threshold: float) -> ConfusionMatrix:
    s, y = _aligned(scores, labels)
    predicted = s >= threshold
    positive = y == 1
    return ConfusionMatrix(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def metric_set(cm: ConfusionMatrix) -> MetricSet:
    if cm.positives == 0 or cm.negatives == 0:
        raise DataError("Metric undefined: a class is absent from the confusion matrix")
    sensitivity = cm.tp / cm.positives
    specificity = cm.tn / cm.negatives
    return MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        sensitivity=sensitivity,
        specificity=specificity,
        ber=1.0 - (sensitivity + specificity) / 2.0,
    )


def _cumulative_counts(s: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct scores descending with tp/fp counts when thresholding at each one"""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.concatenate([last_of_group, [s_sorted.size - 1]])
    tp = np.cumsum(y_sorted)[ends]
    fp = (ends + 1) - tp
    return s_sorted[ends], tp, fp


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    s, y = _aligned(scores, labels)
    _both_classes(y)
    distinct, tp, fp = _cumulative_counts(s, y)
    positives = int(y.sum())
    negatives = y.size - positives
    return RocCurve(
        fpr=np.concatenate([[0.0], fp / negatives]),
        tpr=np.concatenate([[0.0], tp / positives]),
        thresholds=np.concatenate([[np.inf], distinct]),
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve"""
    widths = np.diff(curve.fpr)
    heights = (curve.tpr[1:] + curve.tpr[:-1]) / 2.0
    return float(np.sum(widths * heights))


def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    return auc(roc_curve(scores, labels))


def candidate_thresholds(scores: Sequence[float]) -> np.ndarray:
    """Midpoints between adjacent distinct scores plus one sentinel below the minimum and one above the maximum"""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    # adjacent floats can round the midpoint down onto the lower score
    midpoints = np.where(midpoints > distinct[:-1], midpoints, distinct[1:])
    below = np.nextafter(distinct[0], -np.inf)
    above = np.nextafter(distinct[-1], np.inf)
    return np.concatenate([[below], midpoints, [above]])


def optimal_threshold(scores: Sequence[float], labels: Sequence[int]) -> ThresholdChoice:
    """
    Candidate with minimal BER; ties go to higher sensitivity, then lower threshold.
    """
    s, y = _aligned(scores, labels)
    _both_classes(y)
    candidates = candidate_thresholds(s)

    positives = int(y.sum())
    negatives = y.size - positives
    pos_sorted = np.sort(s[y == 1])
    neg_sorted = np.sort(s[y == 0])
    # counts with score >= threshold
    tp = positives - np.searchsorted(pos_sorted, candidates, side="left")
    fp = negatives - np.searchsorted(neg_sorted, candidates, side="left")

    sensitivity = tp / positives
    specificity = (negatives - fp) / negatives
    ber = 1.0 - (sensitivity + specificity) / 2.0

    best = np.lexsort((candidates, -sensitivity, ber))[0]
    return ThresholdChoice(
        threshold=float(candidates[best]),
        ber=float(ber[best]),
        sensitivity=float(sensitivity[best]),
        specificity=float(specificity[best]),
    )
