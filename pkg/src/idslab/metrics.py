"""Confusion matrix, percent metrics, ROC/AUC and permutation feature importance.

Attack (label 1) is the positive class. Accuracy, FAR, UR, MCC and
sensitivity are reported in percent.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateClassError, InputError
from .seeding import derive_seed


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        for name in ("tn", "fp", "fn", "tp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self):
        return self.tn + self.fp + self.fn + self.tp


def _binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional")
    if not np.isin(arr, (0, 1)).all():
        raise InputError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def confusion(predictions, labels) -> ConfusionMatrix:
    pred = _binary(predictions, "predictions")
    true = _binary(labels, "labels")
    if len(pred) != len(true):
        raise InputError(f"length mismatch: {len(pred)} predictions, {len(true)} labels")
    return ConfusionMatrix(
        tn=int(np.sum((true == 0) & (pred == 0))),
        fp=int(np.sum((true == 0) & (pred == 1))),
        fn=int(np.sum((true == 1) & (pred == 0))),
        tp=int(np.sum((true == 1) & (pred == 1))),
    )


@dataclass(frozen=True)
class ScalarMetrics:
    accuracy: float
    far: float
    ur: float
    mcc: float
    sensitivity: float


def scalar_metrics(cm: ConfusionMatrix) -> ScalarMetrics:
    """Accuracy, false alarm rate, undetected rate, MCC and sensitivity, in percent.

    Degenerate denominators give 0: MCC when any marginal is empty, FAR without
    normal rows, UR and sensitivity without attack rows (with a warning).
    """
    tn, fp, fn, tp = cm.tn, cm.fp, cm.fn, cm.tp
    if cm.total <= 0:
        raise InputError("confusion matrix is empty")
    accuracy = (tp + tn) / (tp + tn + fp + fn) * 100
    if fp + tn == 0:
        warnings.warn("no normal rows: FAR defined as 0", stacklevel=2)
        far = 0.0
    else:
        far = fp / (fp + tn) * 100
    if fn + tp == 0:
        warnings.warn("no attack rows: UR and sensitivity defined as 0", stacklevel=2)
        ur = sensitivity = 0.0
    else:
        ur = fn / (fn + tp) * 100
        sensitivity = 100.0 - ur
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = 0.0 if denom == 0 else (tp * tn - fp * fn) / math.sqrt(denom) * 100
    return ScalarMetrics(accuracy, far, ur, mcc, sensitivity)


def roc_curve(scores, labels):
    """ROC points (fpr, tpr) from (0, 0) to (1, 1) and the trapezoidal AUC.

    One point per distinct score, so tied scores move both rates in one step.
    """
    s = np.asarray(scores, dtype=float)
    y = _binary(labels, "labels")
    if len(s) != len(y):
        raise InputError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError("ROC needs at least one row of each class")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(1 - y)[last_of_group]
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


@dataclass
class MetricsReport:
    algorithm: str
    seed: int
    confusion: ConfusionMatrix
    accuracy: float
    far: float
    ur: float
    mcc: float
    sensitivity: float
    roc: list
    auc: float
    importance: "ImportanceRanking | None" = None

    @classmethod
    def evaluate(cls, algorithm, seed, scores, labels, threshold=0.5):
        scores = np.asarray(scores, dtype=float)
        cm = confusion((scores >= threshold).astype(np.int64), labels)
        sm = scalar_metrics(cm)
        roc, auc = roc_curve(scores, labels)
        return cls(algorithm, seed, cm, sm.accuracy, sm.far, sm.ur, sm.mcc, sm.sensitivity,
                   roc, auc)

    def to_dict(self):
        d = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "confusion": asdict(self.confusion),
            "accuracy": self.accuracy,
            "far": self.far,
            "ur": self.ur,
            "mcc": self.mcc,
            "sensitivity": self.sensitivity,
            "auc": self.auc,
            "roc": [list(p) for p in self.roc],
        }
        if self.importance is not None:
            d["importance"] = self.importance.to_dict()
        return d


@dataclass(frozen=True)
class ImportanceRanking:
    features: tuple
    raw: tuple  # model reliance (ratio mode) or error increase (difference mode)
    normalized: tuple
    baseline_error: float
    mode: str  # "ratio" or "difference"
    repeats: int
    seed: int
    order: tuple = field(init=False)

    def __post_init__(self):
        order = sorted(range(len(self.features)), key=lambda i: (-self.normalized[i], i))
        object.__setattr__(self, "order", tuple(order))

    def ranked(self):
        return [(self.features[i], self.normalized[i], self.raw[i]) for i in self.order]

    def top(self, n=5):
        return self.ranked()[:n]

    def to_dict(self):
        return {
            "mode": self.mode,
            "baseline_error": self.baseline_error,
            "repeats": self.repeats,
            "seed": self.seed,
            "ranking": [{"feature": f, "normalized": c, "raw": r} for f, c, r in self.ranked()],
            "top5": [f for f, _, _ in self.top(5)],
        }


def error_rate(predict_labels, X, y):
    return float(np.mean(predict_labels(X) != y))


def _permuted_error(predict_labels, X, y, j, perm):
    Xp = X.copy()
    Xp[:, j] = X[perm, j]
    return error_rate(predict_labels, Xp, y)


def feature_errors(predict_labels, X, y, features, repeats=5, seed=0, exhaustive=False):
    """Mean error after permuting each listed column; ``{feature_index: error}``.

    Each column draws from its own derived seed, so the result does not
    depend on the order (or grouping) in which features are evaluated.
    """
    n = len(X)
    out = {}
    for j in features:
        if exhaustive:
            errors = [_permuted_error(predict_labels, X, y, j, np.array(p))
                      for p in itertools.permutations(range(n))]
        else:
            rng = np.random.default_rng(derive_seed(seed, "permute", j))
            errors = [_permuted_error(predict_labels, X, y, j, rng.permutation(n))
                      for _ in range(repeats)]
        out[j] = math.fsum(errors) / len(errors)
    return out


def permutation_importance(model, X, y, repeats=5, seed=0, feature_names=None,
                           exhaustive=False):
    """Model reliance of every feature: error after shuffling that column / baseline error.

    Each column is shuffled ``repeats`` times and the permuted errors
    averaged. ``exhaustive`` averages over every permutation instead (small
    sets only). A baseline error of exactly 0 makes the ratio undefined; raw
    values then become error increases and ``mode`` is ``"difference"``.
    Coefficients are normalized to sum to 1 (uniform if every raw value is 0).
    """
    predict_labels = getattr(model, "predict_labels", model)
    X = np.asarray(X, dtype=float)
    y = _binary(y, "labels")
    if len(X) == 0:
        raise InputError("evaluation set is empty")
    if len(np.unique(y)) < 2:
        raise DegenerateClassError("permutation importance needs both classes")
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    n, d = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
    if exhaustive and n > 8:
        raise InputError("exhaustive permutation is limited to 8 rows")
    baseline = error_rate(predict_labels, X, y)
    errors = feature_errors(predict_labels, X, y, range(d), repeats, seed, exhaustive)
    permuted = [errors[j] for j in range(d)]
    if baseline > 0:
        mode = "ratio"
        raw = [e / baseline for e in permuted]
    else:
        mode = "difference"
        raw = [e - baseline for e in permuted]
    total = math.fsum(raw)
    normalized = [r / total for r in raw] if total > 0 else [1.0 / d] * d
    return ImportanceRanking(names, tuple(raw), tuple(normalized), baseline, mode,
                             0 if exhaustive else repeats, seed)
