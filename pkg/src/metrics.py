"""
Classification metrics: confusion matrix, per-class and averaged
precision / recall / F1, accuracy, ROC curve and AUC.

The positive class is 1 (osteoporosis present). Ratios whose denominator is
zero are defined as 0 and listed in ``MetricsReport.zero_division``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .errors import InputError, UndefinedMetricError

logger = logging.getLogger(__name__)

AVERAGINGS = ("macro", "weighted")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    def to_frame(self) -> pd.DataFrame:
        """2x2 table, rows = true label, columns = predicted label."""
        frame = pd.DataFrame([[self.tn, self.fp], [self.fn, self.tp]],
                             index=pd.Index([0, 1], name="true"), columns=[0, 1])
        frame.columns.name = "predicted"
        return frame


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "support": self.support}


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    threshold: float


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation of one set of predictions."""
    per_class: Dict[int, ClassMetrics]
    averages: Dict[str, Dict[str, float]]
    accuracy: float
    confusion: ConfusionMatrix
    zero_division: Tuple[str, ...] = ()
    auc: Optional[float] = None
    roc: Tuple[RocPoint, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "per_class": {str(label): metrics.to_dict() for label, metrics in self.per_class.items()},
            "macro": self.averages["macro"],
            "weighted": self.averages["weighted"],
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
            "zero_division": list(self.zero_division),
            "auc": self.auc,
            "roc": [
                {"fpr": p.fpr, "tpr": p.tpr, "threshold": None if np.isinf(p.threshold) else p.threshold}
                for p in self.roc
            ],
        }

    def roc_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "fpr": [p.fpr for p in self.roc],
            "tpr": [p.tpr for p in self.roc],
            "threshold": [p.threshold for p in self.roc],
        })


def _binary_vector(values, name: str) -> np.ndarray:
    array = np.asarray(values)
    if array.ndim != 1:
        raise InputError(f"{name} must be a vector")
    if not np.all((array == 0) | (array == 1)):
        raise InputError(f"{name} must contain only 0 and 1")
    return array.astype(np.int64)


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    y_true = _binary_vector(y_true, "y_true")
    y_pred = _binary_vector(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise InputError(f"Length mismatch: {y_true.size} true labels vs {y_pred.size} predictions")
    if y_true.size == 0:
        raise InputError("Metrics need at least one row")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
    )


def _ratio(numerator: int, denominator: int, flag: str, flags: List[str]) -> float:
    if denominator == 0:
        flags.append(flag)
        return 0.0
    return numerator / denominator


def _f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)


def compute_metrics(y_true, y_pred) -> MetricsReport:
    """
    Per-class precision, recall and F1, their macro and support-weighted
    means, and accuracy. No ROC (that needs scores, see roc_and_auc).
    """
    cm = confusion_matrix(y_true, y_pred)
    flags: List[str] = []
    # class 1 counts as positive with (tp, fp, fn); class 0 swaps the roles
    counts = {1: (cm.tp, cm.fp, cm.fn), 0: (cm.tn, cm.fn, cm.fp)}
    per_class = {}
    for label in (0, 1):
        tp, fp, fn = counts[label]
        precision = _ratio(tp, tp + fp, f"precision_{label}", flags)
        recall = _ratio(tp, tp + fn, f"recall_{label}", flags)
        per_class[label] = ClassMetrics(precision=precision, recall=recall,
                                        f1=_f1(precision, recall), support=tp + fn)

    total = cm.total
    averages = {}
    for averaging in AVERAGINGS:
        if averaging == "macro":
            weights = {0: 0.5, 1: 0.5}
        else:
            weights = {label: per_class[label].support / total for label in (0, 1)}
        averages[averaging] = {
            metric: float(sum(weights[label] * getattr(per_class[label], metric) for label in (0, 1)))
            for metric in ("precision", "recall", "f1")
        }
    if flags:
        logger.debug(f"Zero-denominator metrics set to 0: {', '.join(flags)}")
    return MetricsReport(per_class=per_class, averages=averages, accuracy=(cm.tp + cm.tn) / total,
                         confusion=cm, zero_division=tuple(flags))


def roc_and_auc(y_true, scores) -> Tuple[Tuple[RocPoint, ...], float]:
    """
    ROC curve over the distinct scores, descending, and its trapezoidal area.

    Tied scores form one point. The curve starts at (0, 0) with threshold +inf
    and ends at (1, 1).
    """
    y_true = _binary_vector(y_true, "y_true")
    scores = np.asarray(scores, dtype=float)
    if scores.shape != y_true.shape:
        raise InputError(f"Length mismatch: {y_true.size} labels vs {scores.size} scores")
    if not np.all(np.isfinite(scores)):
        raise InputError("Scores must be finite")
    positives = int(np.sum(y_true == 1))
    negatives = y_true.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = y_true[order]
    # last position of every group of equal scores
    group_ends = np.flatnonzero(np.r_[sorted_scores[1:] != sorted_scores[:-1], True])
    tps = np.cumsum(sorted_labels)[group_ends]
    fps = (group_ends + 1) - tps

    fpr = np.r_[0.0, fps / negatives]
    tpr = np.r_[0.0, tps / positives]
    thresholds = np.r_[np.inf, sorted_scores[group_ends]]
    auc = float(trapezoid(tpr, fpr))
    points = tuple(RocPoint(float(f), float(t), float(s)) for f, t, s in zip(fpr, tpr, thresholds))
    return points, auc


def pairwise_auc(y_true, scores) -> float:
    """Mann-Whitney statistic: share of (positive, negative) pairs ranked correctly, ties ½."""
    y_true = _binary_vector(y_true, "y_true")
    scores = np.asarray(scores, dtype=float)
    pos = scores[y_true == 1]
    neg = scores[y_true == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


def evaluate_predictions(y_true, y_pred, scores) -> MetricsReport:
    """compute_metrics plus the ROC curve and AUC of the positive-class scores."""
    roc, auc = roc_and_auc(y_true, scores)
    return replace(compute_metrics(y_true, y_pred), auc=auc, roc=roc)


def match_reported(report: MetricsReport, reported: Dict[str, float], tolerance: float = 0.03,
                   accuracy_points: float = 3.0) -> dict:
    """
    Compare a report against published values.

    ``reported`` holds accuracy in percent plus precision / recall / f1; the
    result says which averaging convention lands within ``tolerance`` and
    whether accuracy lies within ``accuracy_points`` percentage points.
    """
    matches = {}
    for averaging in AVERAGINGS:
        matches[averaging] = all(
            abs(report.averages[averaging][metric] - reported[metric]) <= tolerance
            for metric in ("precision", "recall", "f1") if metric in reported
        )
    accuracy_gap = 100.0 * report.accuracy - reported["accuracy"]
    return {
        "reported": reported,
        "accuracy_gap_points": accuracy_gap,
        "accuracy_within_tolerance": abs(accuracy_gap) <= accuracy_points,
        "averaging_matches": matches,
    }
