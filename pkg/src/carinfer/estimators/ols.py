from __future__ import annotations

import numpy as np

from ._linalg import check_rank, standard_errors
from .result import FitResult, SingularDesignError


def _unpack(X):
    if hasattr(X, "values") and hasattr(X, "columns"):
        return np.asarray(X.values, dtype=float), tuple(X.columns)
    X = np.asarray(X, dtype=float)
    return X, tuple(f"x{j}" for j in range(X.shape[1]))


def fit_ols(X, y) -> FitResult:
    """Least squares with the classical variance RSS/(n-p) * (X'X)^-1."""
    X, columns = _unpack(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need n > p, got n={n}, p={p}")
    check_rank(X)
    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (n - p)
    Rinv = np.linalg.solve(R, np.eye(p))
    vcov = sigma2 * (Rinv @ Rinv.T)
    return FitResult(
        beta=beta,
        se=standard_errors(vcov),
        vcov=vcov,
        converged=True,
        iterations=1,
        model_kind="ols",
        columns=columns,
        treatment_index=columns.index("arm") if "arm" in columns else 1,
        score_norm=float(np.abs(X.T @ resid).max()) if p else 0.0,
        extra={"sigma2": sigma2},
    )


def ols_treatment_batch(Z: np.ndarray, arms: np.ndarray, y: np.ndarray):
    """Treatment coefficient and standard error for many arm vectors at once.

    ``Z`` holds the arm-independent columns (intercept included), ``arms`` is
    (B, n). By Frisch-Waugh-Lovell the treatment coefficient is the slope of
    y on the arm vector after both are residualized on ``Z``; this gives the
    same numbers as :func:`fit_ols` on each full design.

    Returns (estimate, se) arrays of length B; singular rows get NaN.
    """
    Z = np.asarray(Z, dtype=float)
    A = np.asarray(arms, dtype=float).T
    y = np.asarray(y, dtype=float)
    n, k = Z.shape
    p = k + 1
    if k:
        check_rank(Z)
        Q, _ = np.linalg.qr(Z)
        A_res = A - Q @ (Q.T @ A)
        y_res = y - Q @ (Q.T @ y)
    else:
        A_res, y_res = A, y
    sxx = np.einsum("ij,ij->j", A_res, A_res)
    sxy = A_res.T @ y_res
    # Arm vectors that lie in span(Z) leave the full design singular.
    ok = sxx > 1e-10 * max(1.0, float(np.einsum("ij,ij->j", A, A).max(initial=0.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.where(ok, sxy / sxx, np.nan)
        rss = float(y_res @ y_res) - est * sxy
        sigma2 = np.clip(rss, 0.0, None) / (n - p)
        se = np.where(ok, np.sqrt(sigma2 / sxx), np.nan)
    return est, se
