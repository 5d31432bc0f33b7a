"""Seed derivation.

Every random stream in the package is addressed by a tuple of integers
(master seed, replicate index, stage tag, ...), so a draw never depends on
which worker produced it or on what else ran before it.
"""
from __future__ import annotations

import numpy as np

# Stage tags. New stages must take fresh values; reusing one couples streams.
COVARIATES = 1
ALLOCATION = 2
OUTCOME = 3
PERMUTATION = 4
RERANDOMIZATION = 5
PSEUDO_TRUE = 6


def generator(seed, *key: int) -> np.random.Generator:
    """Counter-based (Philox) generator for ``seed`` refined by ``key``.

    ``seed`` may already be a Generator, in which case it is returned as is
    and ``key`` must be empty.
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise ValueError("cannot refine an existing Generator with a key")
        return seed
    if seed is None:
        ss = np.random.SeedSequence()
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
