"""Gaussian naive Bayes."""

from __future__ import annotations

import numpy as np


def fit_gaussian_nb(X, y, hp, rng):
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        means.append(Xc.mean(axis=0))
        variances.append(np.maximum(Xc.var(axis=0), hp["var_floor"]))
        priors.append(len(Xc) / len(X))
    return {"mean": np.array(means), "var": np.array(variances), "log_prior": np.log(priors)}


def joint_log_likelihood(params, X):
    out = []
    for c in (0, 1):
        mu, var = params["mean"][c], params["var"][c]
        ll = -0.5 * np.sum(np.log(2 * np.pi * var)) - 0.5 * np.sum((X - mu) ** 2 / var, axis=1)
        out.append(params["log_prior"][c] + ll)
    return np.stack(out, axis=1)


def score_gaussian_nb(params, X):
    jll = joint_log_likelihood(params, X)
    return np.exp(jll[:, 1] - np.logaddexp(jll[:, 0], jll[:, 1]))
