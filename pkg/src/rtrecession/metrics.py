"""Confusion-matrix metrics, ROC/PR curves and their areas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_io import write_csv
from .errors import DegenerateError, ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


def _binary(a, name) -> np.ndarray:
    a = np.asarray(a)
    if not np.isin(a, (0, 1)).all():
        raise ValidationError(f"{name} must be binary")
    return a.astype(np.int64)


def confusion(labels, calls) -> ConfusionMatrix:
    y = _binary(labels, "labels")
    c = _binary(calls, "calls")
    if y.shape != c.shape:
        raise ValidationError(f"length mismatch: {len(y)} labels, {len(c)} calls")
    return ConfusionMatrix(
        tp=int(np.sum((y == 1) & (c == 1))),
        fn=int(np.sum((y == 1) & (c == 0))),
        fp=int(np.sum((y == 0) & (c == 1))),
        tn=int(np.sum((y == 0) & (c == 0))),
    )


@dataclass(frozen=True)
class PointMetrics:
    sensitivity: float
    specificity: float
    precision: float
    balanced_accuracy: float
    mcc: float
    f1: float
    degenerate: frozenset = field(default_factory=frozenset)


def _mcc(cm: ConfusionMatrix) -> float | None:
    denom = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if denom == 0:
        return None
    return (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denom)


def point_metrics(cm: ConfusionMatrix) -> PointMetrics:
    """Sensitivity, specificity, precision, BAcc, MCC and F1.

    Undefined precision or MCC come back as 0 and are named in ``degenerate``.
    """
    if cm.positives + cm.negatives == 0:
        raise DegenerateError("empty confusion matrix")
    if cm.positives == 0 or cm.negatives == 0:
        raise DegenerateError("point metrics need both actual classes")
    flags = set()
    sens = cm.tp / cm.positives
    spec = cm.tn / cm.negatives
    if cm.tp + cm.fp == 0:
        prec = 0.0
        flags.add("precision")
    else:
        prec = cm.tp / (cm.tp + cm.fp)
    mcc = _mcc(cm)
    if mcc is None:
        mcc = 0.0
        flags.add("mcc")
    f1 = 0.0 if sens == 0 or prec == 0 else 2 / (1 / sens + 1 / prec)
    if "precision" in flags:
        flags.add("f1")
    return PointMetrics(sens, spec, prec, (sens + spec) / 2, mcc, f1, frozenset(flags))


@dataclass(frozen=True)
class CurvePoints:
    cutpoints: np.ndarray
    x: np.ndarray
    y: np.ndarray


def _sweep(labels, scores):
    """Cumulative TP/FP counts at each distinct score, highest score first."""
    y = _binary(labels, "labels")
    s = np.asarray(scores, dtype=float)
    if len(y) != len(s):
        raise ValidationError("labels and scores differ in length")
    P = int(y.sum())
    N = len(y) - P
    if P == 0 or N == 0:
        raise DegenerateError("curve needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    return s[last], tp, fp, P, N


def roc_curve(labels, scores) -> CurvePoints:
    """(FPR, TPR) points, starting at (0, 0) with an infinite cutpoint."""
    cut, tp, fp, P, N = _sweep(labels, scores)
    return CurvePoints(np.r_[np.inf, cut], np.r_[0.0, fp / N], np.r_[0.0, tp / P])


def auroc(labels, scores) -> float:
    """Trapezoidal ROC area; equals P(s+ > s-) + P(s+ = s-) / 2."""
    _, tp, fp, P, N = _sweep(labels, scores)
    tp = np.r_[0, tp].astype(np.int64)
    fp = np.r_[0, fp].astype(np.int64)
    # integer twice-area keeps the result exact
    twice = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice / (2 * P * N)


def pr_curve(labels, scores) -> CurvePoints:
    """(recall, precision) points.

    The recall-0 anchor takes the precision at the smallest positive recall.
    """
    cut, tp, fp, P, _ = _sweep(labels, scores)
    prec = tp / (tp + fp)
    anchor = prec[np.flatnonzero(tp > 0)[0]]
    return CurvePoints(np.r_[np.inf, cut], np.r_[0.0, tp / P], np.r_[anchor, prec])


def auprc(labels, scores) -> float:
    """Step-wise PR area: sum of recall increments times precision."""
    c = pr_curve(labels, scores)
    return float(np.sum(np.diff(c.x) * c.y[1:]))


def phi_coefficient(a, b) -> float:
    a = _binary(a, "series a")
    b = _binary(b, "series b")
    if len(a) != len(b):
        raise ValidationError("phi needs equal-length series")
    if len(np.unique(a)) < 2 or len(np.unique(b)) < 2:
        raise DegenerateError("phi is undefined for a constant series")
    return _mcc(confusion(a, b))


METRIC_COLUMNS = ("auroc", "auprc", "bacc", "mcc", "f1", "sensitivity", "specificity", "precision")


def evaluate(labels, probabilities, calls) -> dict[str, float]:
    """The full metric row for one model/horizon."""
    pm = point_metrics(confusion(labels, calls))
    return {
        "auroc": auroc(labels, probabilities),
        "auprc": auprc(labels, probabilities),
        "bacc": pm.balanced_accuracy,
        "mcc": pm.mcc,
        "f1": pm.f1,
        "sensitivity": pm.sensitivity,
        "specificity": pm.specificity,
        "precision": pm.precision,
    }


def write_curve(path, curve: CurvePoints) -> Path:
    return write_csv(path, ("cutpoint", "x", "y"),
                     [(float(c), float(x), float(y)) for c, x, y in zip(curve.cutpoints, curve.x, curve.y)])
