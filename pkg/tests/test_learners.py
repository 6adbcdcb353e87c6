import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idslab import learners as ln
from idslab.errors import ConfigurationError, InputError, StratificationError
from idslab.learners import linear, neural, trees
from oracles import knn_reference, tree_reference

FAST = {"RandomForest": {"n_trees": 15}, "NeuralNet": {"epochs": 20}}


# -- split ------------------------------------------------------------------------

def test_stratified_split_small_example():
    y = np.array([0] * 8 + [1] * 2)
    train, test = ln.split_indices(y, ln.SplitSpec(0.8, seed=1))
    assert len(train) == 8 and y[train].sum() >= 1 and y[test].sum() >= 1
    again = ln.split_indices(y, ln.SplitSpec(0.8, seed=1))
    assert all(np.array_equal(a, b) for a, b in zip((train, test), again))


def test_split_of_full_size_dataset():
    n = 451_372
    y = np.zeros(n, dtype=np.int64)
    y[:781] = 1
    train, test = ln.split_indices(y, ln.SplitSpec(0.8, seed=3))
    assert abs(len(train) - 361_098) <= 1
    assert abs(y[train].sum() - 0.8 * 781) <= 1


def stratification_feasible(n0, n1, fraction):
    """Brute force: is there a per-class train count meeting every split guarantee?"""
    def options(size):
        return [k for k in range(1, size) if abs(k - fraction * size) <= 1 + 1e-9]
    n = n0 + n1
    return any(abs(a + b - fraction * n) <= 1 + 1e-9 and 0 < a + b < n
               for a in options(n0) for b in options(n1))


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 400), st.integers(0, 400), st.floats(0.05, 0.95), st.booleans(),
       st.integers(0, 2**31))
def test_split_partition_properties(n0, n1, fraction, stratified, seed):
    y = np.array([0] * n0 + [1] * n1)
    spec = ln.SplitSpec(fraction, seed, stratified)
    if stratified and n1 == 0:
        with pytest.raises(StratificationError):
            ln.split_indices(y, spec)
        return
    n = len(y)
    if stratified and not stratification_feasible(n0, n1, fraction):
        with pytest.raises(StratificationError):
            ln.split_indices(y, spec)
        return
    train, test = ln.split_indices(y, spec)
    assert len(train) > 0 and len(test) > 0
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    assert abs(len(train) - fraction * n) <= 1
    if stratified:
        for c, size in ((0, n0), (1, n1)):
            k = int((y[train] == c).sum())
            assert 1 <= k <= size - 1
            assert abs(k - fraction * size) <= 1 + 1e-9


def test_split_fraction_validated():
    with pytest.raises(ConfigurationError):
        ln.SplitSpec(1.0)


# -- KNN ------------------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 9), st.integers(20, 500))
def test_knn_matches_exhaustive_scan(seed, k, n):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, 23)).astype(float)  # many exact ties
    X[:, 5] = 7.0  # a constant column
    y = (rng.random(n) < 0.3).astype(np.int64)
    y[0], y[1] = 0, 1
    model = ln.train(X, y, "KNN", {"k": k}, seed)
    queries = np.vstack([X[:10], rng.integers(0, 4, size=(10, 23))])
    assert np.array_equal(model.scores(queries), knn_reference(model, queries))


def test_knn_k1_memorizes():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 23))
    y = (rng.random(60) < 0.5).astype(np.int64)
    model = ln.train(X, y, "KNN", {"k": 1})
    assert np.array_equal(model.predict_labels(X), y)
    assert model.predict(X[7]) == (int(y[7]), float(y[7]))


# -- decision tree --------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 2), st.integers(1, 4), st.integers(5, 200))
def test_shallow_tree_matches_exhaustive_search(seed, depth, min_leaf, n):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, 4)), 1)
    y = ((X[:, 0] + 0.5 * X[:, 2] + rng.normal(scale=0.7, size=n)) > 0).astype(np.int64)
    tree = trees.build_tree(X, y, depth, min_leaf)
    reference = tree_reference(list(range(n)), X, y, depth, min_leaf)
    queries = np.vstack([X, np.round(rng.normal(size=(20, 4)), 2)])
    got = trees.tree_leaf_values(tree, queries)
    assert np.array_equal(got, np.array([reference(q) for q in queries]))


# -- gradients ------------------------------------------------------------------------

def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(16, 5))
    y = (rng.random(16) < 0.5).astype(float)
    w, b, l2 = rng.normal(size=5), float(rng.normal()), 0.01
    _, gw, gb = linear.logistic_loss_and_grad(w, b, X, y, l2)
    h = 1e-6
    num_w = np.array([
        (linear.logistic_loss_and_grad(w + h * e, b, X, y, l2)[0]
         - linear.logistic_loss_and_grad(w - h * e, b, X, y, l2)[0]) / (2 * h)
        for e in np.eye(5)])
    num_b = (linear.logistic_loss_and_grad(w, b + h, X, y, l2)[0]
             - linear.logistic_loss_and_grad(w, b - h, X, y, l2)[0]) / (2 * h)
    assert rel_error(gw, num_w) < 1e-4
    assert rel_error([gb], [num_b]) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_network_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 6))
    y = (rng.random(12) < 0.5).astype(float)
    params = neural.init_params(6, 8, 0.5, rng)
    params["b1"] = rng.normal(scale=0.1, size=8)
    _, grads = neural.loss_and_grad(params, X, y)
    h = 1e-6
    for name in neural.PARAM_NAMES:
        flat = params[name].ravel()
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name].ravel()[i] += h
            minus[name].ravel()[i] -= h
            numeric[i] = (neural.loss_and_grad(plus, X, y)[0]
                          - neural.loss_and_grad(minus, X, y)[0]) / (2 * h)
        assert rel_error(grads[name], numeric) < 1e-4, name


# -- behaviour ------------------------------------------------------------------------

def separable_toy(seed=0, n=120):
    rng = np.random.default_rng(seed)
    x1 = np.concatenate([rng.uniform(0, 4, n // 2), rng.uniform(6, 10, n - n // 2)])
    X = np.zeros((n, 23))
    X[:, 0] = x1
    X[:, 1] = rng.normal(size=n)
    return X, (x1 > 5).astype(np.int64)


@pytest.mark.parametrize("algorithm", ["DecisionTree", "LogisticRegression", "SVM"])
def test_separable_toy_fits_perfectly(algorithm):
    X, y = separable_toy()
    model = ln.train(X, y, algorithm, seed=1)
    assert np.array_equal(model.predict_labels(X), y)


@pytest.mark.parametrize("algorithm", ln.ALGORITHMS)
def test_single_class_training_predicts_normal(algorithm):
    X = np.random.default_rng(2).normal(size=(30, 23))
    model = ln.train(X, np.zeros(30, dtype=np.int64), algorithm)
    assert not model.predict_labels(X * 100).any()
    assert model.predict(X[0]) == (0, 0.0)


@pytest.mark.parametrize("algorithm", ln.ALGORITHMS)
def test_training_is_deterministic_and_serializable(algorithm, tmp_path):
    X, y = separable_toy(3)
    hp = FAST.get(algorithm)
    a = ln.train(X, y, algorithm, hp, seed=5)
    b = ln.train(X, y, algorithm, hp, seed=5)
    assert ln.model_to_json(a) == ln.model_to_json(b)
    ln.save_model(a, tmp_path / "m.json")
    loaded = ln.load_model(tmp_path / "m.json")
    queries = np.random.default_rng(1).normal(size=(40, 23)) * 5
    assert np.array_equal(loaded.scores(queries), a.scores(queries))
    assert np.all((a.scores(queries) >= 0) & (a.scores(queries) <= 1))


@pytest.mark.parametrize("algorithm", ln.ALGORITHMS)
def test_non_finite_input_rejected(algorithm):
    X, y = separable_toy()
    model = ln.train(X, y, algorithm, FAST.get(algorithm))
    row = X[0].copy()
    row[3] = math.nan
    with pytest.raises(InputError):
        model.predict(row)
    with pytest.raises(InputError):
        model.scores(X[:, :5])


def _noisy(seed=4, n=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 23))
    y = ((X[:, 0] + X[:, 3] * X[:, 4] + rng.normal(scale=0.5, size=n)) > 0.5).astype(np.int64)
    return X, y


@pytest.mark.parametrize("algorithm", ["SVM", "KNN", "LogisticRegression", "NeuralNet"])
def test_standardized_families_ignore_affine_rescaling(algorithm):
    X, y = _noisy()
    scale = np.ones(23)
    shift = np.zeros(23)
    scale[[0, 3]] = [4.0, 0.25]
    shift[[0, 4]] = [64.0, -8.0]
    base = ln.train(X, y, algorithm, FAST.get(algorithm), seed=2)
    moved = ln.train(X * scale + shift, y, algorithm, FAST.get(algorithm), seed=2)
    queries = np.random.default_rng(9).normal(size=(100, 23))
    agree = base.predict_labels(queries) == moved.predict_labels(queries * scale + shift)
    assert agree.mean() >= 0.99


@pytest.mark.parametrize("algorithm", ["DecisionTree", "RandomForest"])
def test_tree_families_ignore_monotone_transforms(algorithm):
    X, y = _noisy()
    base = ln.train(X, y, algorithm, FAST.get(algorithm), seed=2)
    Xt = np.cbrt(X) * 3 + 1
    moved = ln.train(Xt, y, algorithm, FAST.get(algorithm), seed=2)
    assert np.array_equal(base.predict_labels(X), moved.predict_labels(Xt))


def test_forest_unanimity_scores_one():
    X, y = separable_toy(5)
    X = np.repeat(X[:, :1], 23, axis=1)  # every feature carries the class
    model = ln.train(X, y, "RandomForest", {"n_trees": 20}, seed=1)
    row = np.full(23, 9.5)
    assert model.predict(row) == (1, 1.0)


def test_naive_bayes_survives_constant_features():
    X, y = separable_toy()
    X[:, 10] = 3.0
    scores = ln.train(X, y, "NaiveBayes").scores(X)
    assert np.isfinite(scores).all()


def test_unknown_hyperparameter_rejected():
    with pytest.raises(ConfigurationError):
        ln.train(*separable_toy(), "KNN", {"neighbours": 3})
    with pytest.raises(ConfigurationError):
        ln.train(*separable_toy(), "Perceptron")
