"""Seven binary classifiers behind one ``train``/``predict`` interface.

Scores are probability-like values in [0, 1]; the label is 1 iff the score
reaches ``THRESHOLD``. SVM, KNN, LogisticRegression and NeuralNet see
features standardized with training-set statistics (zero-variance features
map to 0); the tree families and NaiveBayes see raw features.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InputError
from . import bayes, knn, linear, neural, trees
from .split import SplitSpec, split_dataset, split_indices

THRESHOLD = 0.5
MODEL_FORMAT = "idslab-model"
MODEL_VERSION = 1

ALGORITHMS = ("SVM", "KNN", "NaiveBayes", "RandomForest", "DecisionTree",
              "LogisticRegression", "NeuralNet")
STANDARDIZED = frozenset({"SVM", "KNN", "LogisticRegression", "NeuralNet"})

DEFAULT_HYPERPARAMETERS = {
    "SVM": {"l2": 1e-4, "epochs": 50, "learning_rate": 0.01, "batch_size": 64},
    "KNN": {"k": 5},
    "NaiveBayes": {"var_floor": 1e-9},
    "RandomForest": {"n_trees": 100, "max_features": 5, "max_depth": 16, "min_leaf": 1},
    "DecisionTree": {"max_depth": 12, "min_leaf": 5},
    "LogisticRegression": {"learning_rate": 0.1, "epochs": 200, "l2": 1e-4},
    "NeuralNet": {"hidden": 32, "init_scale": 0.05, "epochs": 50, "batch_size": 64,
                  "learning_rate": 1e-3},
}

_INT_HYPERPARAMETERS = {"epochs", "batch_size", "k", "n_trees", "max_features", "max_depth",
                        "min_leaf", "hidden"}


def resolve_hyperparameters(algorithm, overrides=None):
    if algorithm not in DEFAULT_HYPERPARAMETERS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}",
                                 "algorithm")
    hp = dict(DEFAULT_HYPERPARAMETERS[algorithm])
    for key, value in (overrides or {}).items():
        if key not in hp:
            raise ConfigurationError(f"unknown hyperparameter for {algorithm}", key)
        hp[key] = int(value) if key in _INT_HYPERPARAMETERS else float(value)
    for key, value in hp.items():
        if not math.isfinite(value) or value < 0 or (key in _INT_HYPERPARAMETERS and value < 1):
            raise ConfigurationError(f"invalid value {value!r}", key)
    return hp


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def _freeze(obj):
    if isinstance(obj, dict):
        return {k: _freeze(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_freeze(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _frozen(obj)
    return obj


@dataclass(frozen=True)
class TrainedClassifier:
    algorithm: str
    hyperparameters: dict
    seed: int
    params: dict = field(repr=False)
    mean: np.ndarray | None = field(default=None, repr=False)
    std: np.ndarray | None = field(default=None, repr=False)
    constant: int | None = None
    n_features: int = 23

    def transform(self, X):
        if self.mean is None:
            return X
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def scores(self, X):
        """Score for every row of ``X`` (n x n_features)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InputError(f"expected shape (n, {self.n_features}), got {X.shape}")
        if not np.isfinite(X).all():
            raise InputError("non-finite feature value")
        if self.constant is not None:
            return np.full(len(X), float(self.constant))
        Z = self.transform(X)
        return np.clip(_SCORERS[self.algorithm](self, Z), 0.0, 1.0)

    def predict_labels(self, X):
        return (self.scores(X) >= THRESHOLD).astype(np.int64)

    def predict(self, row):
        """``(label, score)`` for a single feature row."""
        score = float(self.scores(np.asarray(row, dtype=float).reshape(1, -1))[0])
        return int(score >= THRESHOLD), score


_SCORERS = {
    "SVM": lambda m, Z: linear.score_svm(m.params, Z),
    "KNN": lambda m, Z: knn.score_knn(m.params, Z, m.hyperparameters["k"]),
    "NaiveBayes": lambda m, Z: bayes.score_gaussian_nb(m.params, Z),
    "RandomForest": lambda m, Z: trees.score_random_forest(m.params, Z),
    "DecisionTree": lambda m, Z: trees.score_decision_tree(m.params, Z),
    "LogisticRegression": lambda m, Z: linear.score_logistic(m.params, Z),
    "NeuralNet": lambda m, Z: neural.score_mlp(m.params, Z),
}


def train(X, y, algorithm, hyperparameters=None, seed=0):
    """Fit one model family; deterministic for a given ``seed``."""
    hp = resolve_hyperparameters(algorithm, hyperparameters)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise InputError(f"need a nonempty (n, d) matrix with n labels, got {X.shape}, {y.shape}")
    if not np.isfinite(X).all():
        raise InputError("non-finite feature value in training data")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    classes = np.unique(y)
    mean = std = None
    if algorithm in STANDARDIZED:
        mean, std = X.mean(axis=0), X.std(axis=0)
    if len(classes) == 1:
        return TrainedClassifier(algorithm, hp, seed, {}, _opt(mean), _opt(std),
                                 int(classes[0]), X.shape[1])
    model = TrainedClassifier(algorithm, hp, seed, {}, _opt(mean), _opt(std), None, X.shape[1])
    Z = model.transform(X)
    rng = np.random.default_rng(seed)
    if algorithm == "RandomForest":
        params = trees.fit_random_forest(Z, y, hp, rng, seed)
    else:
        params = _FITTERS[algorithm](Z, y, hp, rng)
    return TrainedClassifier(algorithm, hp, seed, _freeze(params), model.mean, model.std, None,
                             X.shape[1])


def _opt(a):
    return None if a is None else _frozen(a)


_FITTERS = {
    "SVM": linear.fit_svm,
    "KNN": knn.fit_knn,
    "NaiveBayes": bayes.fit_gaussian_nb,
    "DecisionTree": trees.fit_decision_tree,
    "LogisticRegression": linear.fit_logistic,
    "NeuralNet": neural.fit_mlp,
}


def predict(model: TrainedClassifier, row):
    return model.predict(row)


# -- persistence ------------------------------------------------------------------

def _encode(obj):
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        return {"__ndarray__": base64.b64encode(arr.astype(arr.dtype.newbyteorder("<"))
                                                .tobytes()).decode("ascii"),
                "dtype": arr.dtype.newbyteorder("<").str, "shape": list(arr.shape)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            raw = base64.b64decode(obj["__ndarray__"])
            return _frozen(np.frombuffer(raw, dtype=np.dtype(obj["dtype"]))
                           .reshape(obj["shape"]).astype(np.dtype(obj["dtype"]).newbyteorder("=")))
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_json(model: TrainedClassifier):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "algorithm": model.algorithm,
        "hyperparameters": model.hyperparameters,
        "seed": model.seed,
        "n_features": model.n_features,
        "constant": model.constant,
        "normalization": None if model.mean is None else
        {"mean": _encode(model.mean), "std": _encode(model.std)},
        "params": _encode(model.params),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not an idslab model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    norm = doc["normalization"]
    return TrainedClassifier(
        algorithm=doc["algorithm"],
        hyperparameters=resolve_hyperparameters(doc["algorithm"], doc["hyperparameters"]),
        seed=doc["seed"],
        params=_decode(doc["params"]),
        mean=None if norm is None else _decode(norm["mean"]),
        std=None if norm is None else _decode(norm["std"]),
        constant=doc["constant"],
        n_features=doc["n_features"],
    )


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path) as fh:
        return model_from_json(fh.read())


__all__ = [
    "ALGORITHMS", "DEFAULT_HYPERPARAMETERS", "SplitSpec", "THRESHOLD", "TrainedClassifier",
    "load_model", "model_from_json", "model_to_json", "predict", "resolve_hyperparameters",
    "save_model", "split_dataset", "split_indices", "train",
]
