"""Design matrices for the three analysis models.

naive   intercept + treatment
model1  + baseline value + male indicator
model2  + 9 site dummies (site 10 is the reference) + low/medium status
        dummies (high is the reference) + male indicator

Cox designs drop the intercept, which the baseline hazard absorbs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..alloc import N_SITES

MODEL_SPECS = ("naive", "model1", "model2")


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    columns: tuple[str, ...]

    @property
    def treatment_index(self) -> int:
        return self.columns.index("arm")

    @property
    def has_intercept(self) -> bool:
        return "intercept" in self.columns

    @property
    def shape(self):
        return self.values.shape


def covariate_block(dataset, model_spec: str) -> tuple[np.ndarray, list[str]]:
    """Columns of the design that do not depend on the arm."""
    n = dataset.n
    male = np.asarray(dataset.male, dtype=float)
    if model_spec == "naive":
        return np.empty((n, 0)), []
    if model_spec == "model1":
        return np.column_stack([np.asarray(dataset.baseline, float), male]), ["baseline", "male"]
    if model_spec == "model2":
        site = np.asarray(dataset.site)
        if site.size and (site.min() < 1 or site.max() > N_SITES):
            bad = sorted(set(site[(site < 1) | (site > N_SITES)].tolist()))
            raise DesignError(f"unseen site level(s) {bad}")
        status = dataset.status
        cols = [(site == k).astype(float) for k in range(1, N_SITES)]
        cols += [(status == 0).astype(float), (status == 1).astype(float), male]
        names = [f"site{k}" for k in range(1, N_SITES)] + ["status_low", "status_medium", "male"]
        return np.column_stack(cols), names
    raise DesignError(f"unknown model spec {model_spec!r}; expected one of {MODEL_SPECS}")


def build_design(dataset, model_spec: str, outcome_kind: str = "normal",
                 arm=None) -> DesignMatrix:
    """Design for ``model_spec``; ``outcome_kind`` 'cox' omits the intercept.

    Constant columns other than the intercept raise DesignError rather than
    being dropped, so the reported coefficient layout is always the same.
    """
    arm = dataset.arm if arm is None else arm
    if arm is None:
        raise DesignError("dataset has no arm column")
    cov, names = covariate_block(dataset, model_spec)
    n = dataset.n
    parts = [np.asarray(arm, dtype=float)[:, None], cov]
    columns = ["arm"] + names
    if outcome_kind != "cox":
        parts.insert(0, np.ones((n, 1)))
        columns.insert(0, "intercept")
    X = np.hstack(parts)
    start = 1 if outcome_kind != "cox" else 0
    constant = [columns[j] for j in range(start, X.shape[1]) if n and np.ptp(X[:, j]) == 0]
    if constant:
        raise DesignError(f"constant design column(s): {', '.join(constant)}")
    return DesignMatrix(X, tuple(columns))
