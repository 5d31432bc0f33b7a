from __future__ import annotations

import numpy as np
from scipy.special import expit

from ._linalg import spd_inverse, standard_errors
from .ols import _unpack
from .result import FitResult, SingularDesignError

MAX_STEP = 5.0


def penalized_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    """Log-likelihood plus half the log-determinant of the Fisher information."""
    eta = X @ beta
    loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    p = expit(eta)
    info = (X * (p * (1 - p))[:, None]).T @ X
    sign, logdet = np.linalg.slogdet(info)
    if sign <= 0:
        return -np.inf
    return loglik + 0.5 * logdet


def fit_firth_logistic(X, y, tol: float = 1e-8, max_iter: int = 50) -> FitResult:
    """Firth bias-reduced logistic regression.

    Newton iterations on the modified score X'(y - p + h(1/2 - p)), where h
    are the diagonal elements of the weighted hat matrix. Steps are capped
    at MAX_STEP in max-norm and halved while the penalized log-likelihood
    decreases.
    """
    X, columns = _unpack(X)
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary outcome must be coded 0/1")
    n, k = X.shape
    beta = np.zeros(k)
    converged = False
    it = 0
    score = np.full(k, np.inf)
    current = penalized_loglik(X, y, beta)
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        w = p * (1 - p)
        info = (X * w[:, None]).T @ X
        info_inv = spd_inverse(info)
        h = w * np.einsum("ij,jk,ik->i", X, info_inv, X)
        score = X.T @ (y - p + h * (0.5 - p))
        if np.max(np.abs(score)) <= tol:
            converged = True
            break
        step = info_inv @ score
        biggest = np.max(np.abs(step))
        if biggest > MAX_STEP:
            step *= MAX_STEP / biggest
        t = 1.0
        while True:
            trial = beta + t * step
            value = penalized_loglik(X, y, trial)
            if value >= current - 1e-12 or t < 1e-6:
                break
            t *= 0.5
        beta, current = trial, value
    else:
        p = expit(X @ beta)
        w = p * (1 - p)
        h = w * np.einsum("ij,jk,ik->i", X, spd_inverse((X * w[:, None]).T @ X), X)
        score = X.T @ (y - p + h * (0.5 - p))
        converged = bool(np.max(np.abs(score)) <= tol)

    p = expit(X @ beta)
    try:
        vcov = spd_inverse((X * (p * (1 - p))[:, None]).T @ X)
    except SingularDesignError:
        vcov = np.full((k, k), np.nan)
        converged = False
    return FitResult(
        beta=beta,
        se=standard_errors(vcov),
        vcov=vcov,
        converged=converged,
        iterations=it,
        model_kind="firth_logistic",
        columns=columns,
        treatment_index=columns.index("arm") if "arm" in columns else 1,
        score_norm=float(np.max(np.abs(score))),
        extra={"penalized_loglik": current},
    )
