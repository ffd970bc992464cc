"""ACC, F1 and ROC-AUC for the binary NC (0) / AD (1) task."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, UndefinedMetricError


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    f1: float
    auc: float
    n: int
    positive_class: int = 1


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise DataError(f"prediction/truth shapes differ: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise DataError("metrics need at least one sample")
    return pred, truth


def accuracy(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.count_nonzero(pred == truth) / pred.size)


def f1(pred, truth):
    """2TP / (2TP + FP + FN), 0 when nothing is predicted or truly positive."""
    pred, truth = _pair(pred, truth)
    p, t = pred == 1, truth == 1
    tp = np.count_nonzero(p & t)
    fp = np.count_nonzero(p & ~t)
    fn = np.count_nonzero(~p & t)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else float(2 * tp / denom)


def auc(scores, truth):
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties worth 1/2."""
    scores, truth = _pair(np.asarray(scores, dtype=np.float64), truth)
    pos = scores[truth == 1]
    neg = scores[truth != 1]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    credit = kernels.pair_credit(pos, neg)
    return float(credit / (2 * pos.size * neg.size))


def evaluate(pred, scores, truth):
    return MetricsReport(accuracy(pred, truth), f1(pred, truth), auc(scores, truth), int(np.size(truth)))
