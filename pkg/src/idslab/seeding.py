"""Derivation of independent RNG streams from one master seed."""

import hashlib

import numpy as np


def derive_seed(master, *labels):
    """Stable 63-bit seed for the stream named by ``labels`` under ``master``.

    Uses a hash instead of ``hash()`` so values survive interpreter restarts.
    """
    text = "/".join([str(int(master))] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(master, *labels):
    return np.random.default_rng(derive_seed(master, *labels))
