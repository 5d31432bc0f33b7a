from __future__ import annotations

import numpy as np

from ._linalg import spd_inverse, spd_solve, standard_errors
from .km import km_censoring_survival
from .ols import _unpack
from .result import FitResult, SingularDesignError

G_FLOOR = 0.05


def ipcw_weights(time, event, tau: float, g_floor: float = G_FLOOR):
    """Restricted outcome min(T, tau) and its inverse-probability-of-censoring
    weights. A subject contributes when its restricted outcome is observed:
    an event by tau, or follow-up reaching tau."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    y = np.minimum(time, tau)
    observed = (event == 1) | (time >= tau)
    G = km_censoring_survival(time, event)
    g = np.maximum(G.left_limit(y), g_floor)
    return y, np.where(observed, 1.0 / g, 0.0)


def fit_rmst_tian(X, time, event, tau: float, tol: float = 1e-8, max_iter: int = 100,
                  weights=None) -> FitResult:
    """Log-link regression of the restricted mean survival time.

    Solves sum_i w_i x_i (min(T_i, tau) - exp(x_i'beta)) = 0 with IPCW
    weights; the variance is the sandwich A^-1 M A^-1 (weights treated as
    known). ``weights`` overrides the IPCW weights, mainly for testing.
    """
    X, columns = _unpack(X)
    time = np.asarray(time, dtype=float)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if tau > time.max():
        raise ValueError(f"tau={tau} exceeds the maximum follow-up {time.max()}")
    if weights is None:
        y, w = ipcw_weights(time, event, tau)
    else:
        y, w = np.minimum(time, tau), np.asarray(weights, dtype=float)
    if not np.any(w > 0):
        raise ValueError("every subject is censored before tau")

    n, k = X.shape
    beta = np.zeros(k)
    if "intercept" in columns:
        beta[columns.index("intercept")] = np.log(np.sum(w * y) / np.sum(w))

    def objective(b):
        eta = X @ b
        return float(np.sum(w * (y * eta - np.exp(eta))))

    current = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = np.exp(X @ beta)
        score = X.T @ (w * (y - mu))
        jac = (X * (w * mu)[:, None]).T @ X
        if np.max(np.abs(score)) <= tol * max(1.0, float(np.sum(w * y))):
            converged = True
            break
        step = spd_solve(jac, score)
        t = 1.0
        while True:
            trial = beta + t * step
            value = objective(trial)
            if value >= current - 1e-12 * abs(current) or t < 1e-8:
                break
            t *= 0.5
        beta, current = trial, value

    mu = np.exp(X @ beta)
    score = X.T @ (w * (y - mu))
    try:
        bread = spd_inverse((X * (w * mu)[:, None]).T @ X)
        u = X * (w * (y - mu))[:, None]
        vcov = bread @ (u.T @ u) @ bread
    except SingularDesignError:
        vcov = np.full((k, k), np.nan)
        converged = False
    return FitResult(
        beta=beta,
        se=standard_errors(vcov),
        vcov=vcov,
        converged=converged,
        iterations=it,
        model_kind="rmst",
        columns=columns,
        treatment_index=columns.index("arm") if "arm" in columns else 1,
        score_norm=float(np.max(np.abs(score))),
        extra={"tau": tau},
    )
