from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous nonincreasing step function starting at 1."""

    times: np.ndarray
    values: np.ndarray

    def _lookup(self, t, side):
        idx = np.searchsorted(self.times, t, side=side) - 1
        padded = np.concatenate([[1.0], self.values])
        return padded[idx + 1]

    def __call__(self, t):
        return self._lookup(t, "right")

    def left_limit(self, t):
        """Value just before ``t``."""
        return self._lookup(t, "left")


def km_censoring_survival(time, event) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function G(t) = P(C > t),
    i.e. the product-limit estimator with censorings treated as events."""
    time = np.asarray(time, dtype=float)
    censored = np.asarray(event) == 0
    uniq, inverse = np.unique(time, return_inverse=True)
    n_cens = np.bincount(inverse, weights=censored, minlength=len(uniq))
    n_at = np.bincount(inverse, minlength=len(uniq))
    at_risk = np.cumsum(n_at[::-1])[::-1]
    jumps = n_cens > 0
    factors = 1.0 - n_cens[jumps] / at_risk[jumps]
    return StepFunction(uniq[jumps], np.cumprod(factors))
