"""CART decision trees (Gini) and a bagged random forest.

A split sends ``x[feature] <= threshold`` left. Among splits with equal
impurity the lower feature index wins, then the lower threshold. A tree is
stored as flat arrays; leaves have ``feature == -1`` and ``value`` holds the
fraction of class-1 training rows reaching them.
"""

from __future__ import annotations

import numpy as np

from ..seeding import derive_seed


def split_score(l0, l1, r0, r1):
    """Weighted Gini impurity of a split, up to the constant factor 2/n.

    Every caller must use this exact expression so ties compare identically.
    """
    return l0 * l1 / (l0 + l1) + r0 * r1 / (r0 + r1)


def best_split(X, y, features, min_leaf):
    """Best ``(score, feature, threshold)`` over ``features`` (ascending), or None."""
    n = len(y)
    n1 = int(y.sum())
    best = None
    if n < 2 * min_leaf or n < 2:
        return None
    nl = np.arange(1, n)
    nr = n - nl
    for f in features:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        l1 = np.cumsum(y[order])[:-1]
        l0 = nl - l1
        r1 = n1 - l1
        r0 = nr - r1
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        score = l0 * l1 / nl + r0 * r1 / nr
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if best is None or score[i] < best[0]:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2
            if not lo <= thr < hi:
                thr = lo
            best = (float(score[i]), int(f), float(thr))
    return best


def build_tree(X, y, max_depth, min_leaf, max_features=None, rng=None):
    """Grow one CART tree. ``max_features`` draws a random feature subset per split."""
    n_features = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        n1 = int(ys.sum())
        n0 = len(ys) - n1
        if depth >= max_depth or n0 == 0 or n1 == 0:
            continue
        if max_features is None or max_features >= n_features:
            candidates = range(n_features)
        else:
            candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
        split = best_split(X[idx], ys, candidates, min_leaf)
        if split is None or not split[0] < n0 * n1 / (n0 + n1):
            continue
        _, f, thr = split
        go_left = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left_id = new_node(idx[go_left])
        right_id = new_node(idx[~go_left])
        left[node], right[node] = left_id, right_id
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=float),
    }


def tree_leaf_values(tree, X):
    feature, threshold = tree["feature"], tree["threshold"]
    left, right = tree["left"], tree["right"]
    node = np.zeros(len(X), dtype=np.int64)
    rows = np.arange(len(X))
    while True:
        f = feature[node]
        internal = f >= 0
        if not internal.any():
            return tree["value"][node]
        go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
        node = np.where(internal, np.where(go_left, left[node], right[node]), node)


def fit_decision_tree(X, y, hp, rng):
    return build_tree(X, y, hp["max_depth"], hp["min_leaf"])


def score_decision_tree(params, X):
    return tree_leaf_values(params, X)


def fit_random_forest(X, y, hp, rng, seed=0):
    trees = []
    n = len(y)
    for i in range(hp["n_trees"]):
        tree_rng = np.random.default_rng(derive_seed(seed, "tree", i))
        sample = tree_rng.integers(0, n, size=n)
        trees.append(build_tree(X[sample], y[sample], hp["max_depth"], hp["min_leaf"],
                                hp["max_features"], tree_rng))
    return {"trees": trees}


def score_random_forest(params, X):
    """Fraction of trees voting attack (each tree votes its leaf's majority)."""
    votes = np.zeros(len(X))
    for tree in params["trees"]:
        votes += tree_leaf_values(tree, X) >= 0.5
    return votes / len(params["trees"])
