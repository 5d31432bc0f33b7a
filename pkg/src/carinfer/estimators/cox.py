from __future__ import annotations

import numpy as np

from ._linalg import spd_inverse, standard_errors
from .ols import _unpack
from .result import FitResult, SingularDesignError

DIVERGENCE_BOUND = 20.0
# Information at the solution below this fraction of the information at
# beta = 0 means the likelihood has flattened out toward infinity.
NEAR_SINGULAR = 1e-6


def _prepare(X, time, event):
    order = np.argsort(time, kind="stable")
    t = np.asarray(time, float)[order]
    # Risk set of the i-th sorted subject starts at the first index sharing
    # its time (Breslow: tied subjects are all at risk).
    first = np.searchsorted(t, t, side="left")
    return X[order], np.asarray(event, float)[order], first


def _partial(Xs, ev, first, beta, need_info=True):
    eta = Xs @ beta
    shift = eta.max()
    r = np.exp(eta - shift)
    s0 = np.cumsum(r[::-1])[::-1][first]
    s1 = np.cumsum((r[:, None] * Xs)[::-1], axis=0)[::-1][first]
    loglik = float(np.sum(ev * (eta - shift - np.log(s0))))
    xbar = s1 / s0[:, None]
    score = ((Xs - xbar) * ev[:, None]).sum(axis=0)
    if not need_info:
        return loglik, score, None
    outer = r[:, None, None] * Xs[:, :, None] * Xs[:, None, :]
    s2 = np.cumsum(outer[::-1], axis=0)[::-1][first]
    cov = s2 / s0[:, None, None] - xbar[:, :, None] * xbar[:, None, :]
    info = (cov * ev[:, None, None]).sum(axis=0)
    return loglik, score, info


def cox_log_partial_likelihood(X, time, event, beta) -> float:
    X, _ = _unpack(X)
    Xs, ev, first = _prepare(X, time, event)
    return _partial(Xs, ev, first, np.asarray(beta, float), need_info=False)[0]


def fit_cox(X, time, event, tol: float = 1e-8, max_iter: int = 50) -> FitResult:
    """Cox proportional hazards via Newton-Raphson on the Breslow partial
    likelihood, with step halving. Divergence (|beta| beyond 20 or a
    singular information matrix) is reported as ``converged=False``."""
    X, columns = _unpack(X)
    event = np.asarray(event)
    if not np.any(event == 1):
        raise ValueError("Cox regression needs at least one event")
    n, k = X.shape
    Xc = X - X.mean(axis=0)
    Xs, ev, first = _prepare(Xc, time, event)
    beta = np.zeros(k)
    loglik, score, info = _partial(Xs, ev, first, beta)
    info_scale = float(np.max(np.diag(info), initial=0.0))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(score)) <= tol:
            converged = True
            break
        try:
            info_inv = spd_inverse(info)
        except SingularDesignError:
            break
        step = info_inv @ score
        t = 1.0
        while True:
            trial = beta + t * step
            new = _partial(Xs, ev, first, trial)
            if new[0] >= loglik - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        beta = trial
        loglik, score, info = new
        if np.max(np.abs(beta)) > DIVERGENCE_BOUND:
            break
    else:
        converged = bool(np.max(np.abs(score)) <= tol)

    if np.max(np.abs(beta), initial=0.0) > DIVERGENCE_BOUND:
        converged = False
    if np.linalg.eigvalsh(info).min() <= NEAR_SINGULAR * info_scale:
        converged = False
    try:
        vcov = spd_inverse(info)
    except SingularDesignError:
        vcov = np.full((k, k), np.nan)
        converged = False
    return FitResult(
        beta=beta,
        se=standard_errors(vcov),
        vcov=vcov,
        converged=converged,
        iterations=it,
        model_kind="cox",
        columns=columns,
        treatment_index=columns.index("arm") if "arm" in columns else 0,
        score_norm=float(np.max(np.abs(score))),
        extra={"log_partial_likelihood": loglik},
    )
