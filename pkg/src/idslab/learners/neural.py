"""One-hidden-layer ReLU network with a sigmoid output, trained with Adam."""

from __future__ import annotations

import numpy as np

from .linear import sigmoid

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def init_params(n_in, hidden, init_scale, rng):
    return {
        "W1": rng.uniform(-init_scale, init_scale, size=(n_in, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.uniform(-init_scale, init_scale, size=hidden),
        "b2": np.zeros(1),
    }


def forward(params, X):
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params["W2"] + params["b2"][0]
    return pre, hidden, logits


def loss_and_grad(params, X, y):
    """Mean binary cross-entropy and its gradient with respect to every parameter."""
    pre, hidden, z = forward(params, X)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (sigmoid(z) - y) / len(y)
    dhidden = np.outer(dz, params["W2"]) * (pre > 0)
    grads = {
        "W2": hidden.T @ dz,
        "b2": np.array([dz.sum()]),
        "W1": X.T @ dhidden,
        "b1": dhidden.sum(axis=0),
    }
    return loss, grads


def fit_mlp(X, y, hp, rng):
    params = init_params(X.shape[1], hp["hidden"], hp["init_scale"], rng)
    lr, beta1, beta2, eps = hp["learning_rate"], 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    n, batch = len(y), hp["batch_size"]
    for _ in range(hp["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, grads = loss_and_grad(params, X[idx], y[idx])
            step += 1
            c1 = 1 - beta1 ** step
            c2 = 1 - beta2 ** step
            for k in PARAM_NAMES:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                params[k] = params[k] - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
    return params


def score_mlp(params, X):
    return sigmoid(forward(params, X)[2])
