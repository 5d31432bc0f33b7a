from __future__ import annotations

import numpy as np

from .result import SingularDesignError

RCOND = 1e-12


def check_rank(X: np.ndarray) -> np.ndarray:
    """Upper-triangular R of a thin QR of ``X``; raises on rank deficiency."""
    n, p = X.shape
    if n < p:
        raise SingularDesignError(f"{n} rows cannot identify {p} coefficients")
    r = np.linalg.qr(X, mode="r")
    d = np.abs(np.diag(r))
    if d.size and d.min() <= RCOND * max(d.max(), 1.0) * max(n, p):
        raise SingularDesignError("design matrix is rank deficient")
    return r


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("information matrix is not positive definite") from exc
    d = np.diag(L)
    if d.min() <= np.sqrt(RCOND) * d.max():
        raise SingularDesignError("information matrix is numerically singular")
    Linv = np.linalg.solve(L, np.eye(len(A)))
    return Linv.T @ Linv


def spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("information matrix is not positive definite") from exc
    d = np.diag(L)
    if d.min() <= np.sqrt(RCOND) * d.max():
        raise SingularDesignError("information matrix is numerically singular")
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def standard_errors(vcov: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(np.diag(vcov), 0.0, None))
