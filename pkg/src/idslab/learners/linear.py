"""Logistic regression and a linear soft-margin SVM, trained by (sub)gradient descent."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_and_grad(w, b, X, y, l2):
    """Mean cross-entropy plus ``l2/2 * ||w||^2``, and its gradient (dw, db)."""
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)
    residual = (sigmoid(z) - y) / len(y)
    return loss, X.T @ residual + l2 * w, float(residual.sum())


def fit_logistic(X, y, hp, rng):
    w = np.zeros(X.shape[1])
    b = 0.0
    lr, l2 = hp["learning_rate"], hp["l2"]
    for _ in range(hp["epochs"]):
        _, gw, gb = logistic_loss_and_grad(w, b, X, y, l2)
        w -= lr * gw
        b -= lr * gb
    return {"w": w, "b": np.array([b])}


def score_logistic(params, X):
    return sigmoid(X @ params["w"] + params["b"][0])


def hinge_objective(w, b, X, y_pm, lam):
    margins = y_pm * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def fit_platt(margins, y, iterations=100):
    """Fit ``P(y=1 | m) = sigmoid(a*m + c)`` with Platt's smoothed targets (Newton steps)."""
    n1 = float(y.sum())
    n0 = len(y) - n1
    t = np.where(y == 1, (n1 + 1) / (n1 + 2), 1 / (n0 + 2))
    a, c = 1.0, float(np.log((n1 + 1) / (n0 + 1)))

    def nll(a, c):
        z = a * margins + c
        return float(np.sum(np.logaddexp(0.0, z) - t * z))

    current = nll(a, c)
    for _ in range(iterations):
        p = sigmoid(a * margins + c)
        g = np.array([np.dot(p - t, margins), np.sum(p - t)])
        s = p * (1 - p)
        H = np.array([[np.dot(s, margins * margins), np.dot(s, margins)],
                      [np.dot(s, margins), np.sum(s)]]) + 1e-12 * np.eye(2)
        step = np.linalg.solve(H, g)
        scale = 1.0
        while scale > 1e-8:
            na, nc = a - scale * step[0], c - scale * step[1]
            trial = nll(na, nc)
            if trial <= current:
                break
            scale /= 2
        else:
            break
        improved = current - trial
        a, c, current = na, nc, trial
        if improved < 1e-12 * max(1.0, abs(current)):
            break
    return a, c


def fit_svm(X, y, hp, rng):
    y_pm = np.where(y == 1, 1.0, -1.0)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    lam, lr0, batch = hp["l2"], hp["learning_rate"], hp["batch_size"]
    for epoch in range(hp["epochs"]):
        lr = lr0 / (1.0 + epoch)
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            Xb, yb = X[idx], y_pm[idx]
            active = yb * (Xb @ w + b) < 1.0
            gw = lam * w - (yb[active] @ Xb[active]) / len(idx)
            gb = -float(yb[active].sum()) / len(idx)
            w -= lr * gw
            b -= lr * gb
    a, c = fit_platt(X @ w + b, y)
    return {"w": w, "b": np.array([b]), "platt": np.array([a, c])}


def svm_margin(params, X):
    return X @ params["w"] + params["b"][0]


def score_svm(params, X):
    a, c = params["platt"]
    return sigmoid(a * svm_margin(params, X) + c)
