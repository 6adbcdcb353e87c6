"""Seeded train/test partition with optional stratification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, StratificationError


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError(f"must lie in (0, 1), got {self.train_fraction}",
                                     "train_fraction")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _allocate(class_sizes, fraction, n_train):
    """Per-class train counts by largest remainder, aiming at ``n_train`` in total.

    Every class stays within one row of ``fraction * size`` and keeps at
    least one row on each side. The total may then
    move off ``n_train``, but never by more than one row from ``fraction * n``.
    """
    n = sum(class_sizes)
    targets = [fraction * size for size in class_sizes]
    if min(class_sizes) < 2:
        raise StratificationError("every class needs at least 2 rows to appear on both sides")
    lo = [max(math.ceil(t - 1), 1) for t in targets]
    hi = [min(math.floor(t + 1), size - 1) for t, size in zip(targets, class_sizes)]
    ideal = [size * n_train / n for size in class_sizes]
    alloc = [math.floor(v) for v in ideal]
    by_remainder = sorted(range(len(ideal)), key=lambda i: (-(ideal[i] - alloc[i]), i))
    for i in by_remainder[: n_train - sum(alloc)]:
        alloc[i] += 1
    alloc = [min(max(k, a), b) for k, a, b in zip(alloc, lo, hi)]
    while sum(alloc) != n_train:
        if sum(alloc) < n_train:
            free = [i for i in range(len(alloc)) if alloc[i] < hi[i]]
            pick = max(free, key=lambda i: (targets[i] - alloc[i], -i), default=None)
            step = 1
        else:
            free = [i for i in range(len(alloc)) if alloc[i] > lo[i]]
            pick = max(free, key=lambda i: (alloc[i] - targets[i], -i), default=None)
            step = -1
        if pick is None:
            break
        alloc[pick] += step
    if abs(sum(alloc) - fraction * n) > 1 + 1e-9 or not 0 < sum(alloc) < n:
        raise StratificationError(
            f"no split near {fraction:g} of {n} rows holds every class on both sides")
    return alloc


def split_indices(y, spec: SplitSpec):
    """Sorted (train_index, test_index) arrays."""
    y = np.asarray(y)
    n = len(y)
    if n < 2:
        raise ConfigurationError("need at least 2 rows to split", "dataset")
    n_train = min(max(_round_half_up(n * spec.train_fraction), 1), n - 1)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    classes = np.unique(y)
    if len(classes) < 2:
        raise StratificationError("stratified split needs both classes present")
    members = [np.flatnonzero(y == c) for c in classes]
    alloc = _allocate([len(m) for m in members], spec.train_fraction, n_train)
    train, test = [], []
    for m, k in zip(members, alloc):
        perm = rng.permutation(m)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_dataset(dataset, spec: SplitSpec = SplitSpec()):
    """Disjoint, exhaustive (train, test) partition of a ``Dataset``."""
    train_idx, test_idx = split_indices(dataset.y, spec)
    return dataset.subset(train_idx), dataset.subset(test_idx)
