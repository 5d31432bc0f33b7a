"""Margin-shifted Wald tests with critical values from resampling nulls.

The null distribution of the treatment statistic is built either by
shuffling the observed arm labels (permutation) or by re-running the
trial's allocation scheme on a random enrollment order (re-randomization).
Resampled statistics are evaluated at margin 0; the decision statistic
carries the margin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import norm

from . import rng as _rng
from .alloc import assign_batch, normalize_scheme
from .estimators import (
    DEFAULT_TAU,
    DesignError,
    FitResult,
    SingularDesignError,
    covariate_block,
    fit_model,
    ols_treatment_batch,
)

MIN_B = 100
MAX_FAILURE_RATE = 0.05
EXHAUSTIVE_LIMIT = 200_000


class ResamplingError(RuntimeError):
    """Too many resampled fits failed to converge."""


@dataclass(frozen=True)
class TestStatistic:
    __test__ = False  # not a pytest class

    value: float
    margin: float
    coefficient_index: int


@dataclass(frozen=True)
class EmpiricalDistribution:
    stats: np.ndarray
    method: str
    scheme: str | None = None
    B: int = 0
    seed: object = None
    n_failed: int = 0
    exhaustive: bool = False

    def __post_init__(self):
        s = np.sort(np.asarray(self.stats, dtype=float))
        if not np.all(np.isfinite(s)):
            raise ValueError("empirical distribution contains non-finite statistics")
        object.__setattr__(self, "stats", s)

    def __len__(self):
        return len(self.stats)


@dataclass(frozen=True)
class AdjustedCI:
    lower: float
    upper: float
    alpha: float
    method: str
    quantiles: tuple = field(default=(), compare=False)


def wald_stat(fit: FitResult, margin: float = 0.0) -> TestStatistic:
    """(beta_1 - margin) / SE(beta_1) for the treatment coefficient."""
    se = fit.stderr
    if not (np.isfinite(se) and se > 0):
        raise ValueError(f"treatment standard error must be positive, got {se}")
    return TestStatistic((fit.estimate - margin) / se, float(margin), fit.treatment_index)


# -- resampled arm vectors ---------------------------------------------------

def permutation_arms(arm, B: int, seed=None) -> np.ndarray:
    """(B, n) matrix of uniformly shuffled copies of ``arm``."""
    rng = _rng.generator(seed)
    return rng.permuted(np.tile(np.asarray(arm, dtype=np.int8), (B, 1)), axis=1)


def all_label_assignments(arm) -> np.ndarray:
    """Every arm vector with the observed group sizes, one per row."""
    arm = np.asarray(arm)
    n, n1 = len(arm), int(arm.sum())
    count = math.comb(n, n1)
    if count > EXHAUSTIVE_LIMIT:
        raise ValueError(f"{count} assignments is too many to enumerate")
    out = np.zeros((count, n), dtype=np.int8)
    for row, treated in enumerate(combinations(range(n), n1)):
        out[row, list(treated)] = 1
    return out


def rerandomization_arms(dataset, scheme: str, B: int, seed=None, q: float = 0.7,
                         block_size: int = 4) -> np.ndarray:
    """(B, n) arm vectors from re-running ``scheme`` on random enrollment orders.

    Column ``i`` always refers to the i-th subject of ``dataset``.
    """
    rng = _rng.generator(seed)
    n = dataset.n
    orders = rng.permuted(np.tile(np.arange(n), (B, 1)), axis=1)
    uniforms = rng.random((B, n))
    levels = dataset.levels[orders]
    strata = dataset.strata[orders]
    by_position = assign_batch(scheme, levels, strata, uniforms, q=q, block_size=block_size)
    arms = np.empty_like(by_position)
    np.put_along_axis(arms, orders, by_position, axis=1)
    return arms


# -- null statistics -----------------------------------------------------------

def null_statistics(dataset, model_spec: str, analysis: str, arms: np.ndarray,
                    tau: float = DEFAULT_TAU) -> np.ndarray:
    """Margin-0 Wald statistic for each row of ``arms``; NaN where the fit
    failed or did not converge."""
    arms = np.atleast_2d(arms)
    if analysis == "normal":
        cov, _ = covariate_block(dataset, model_spec)
        Z = np.column_stack([np.ones(dataset.n), cov])
        est, se = ols_treatment_batch(Z, arms, dataset.y)
        with np.errstate(invalid="ignore", divide="ignore"):
            return est / se
    out = np.full(len(arms), np.nan)
    for b, arm in enumerate(arms):
        try:
            fit = fit_model(dataset, model_spec, analysis, arm=arm, tau=tau)
        except (SingularDesignError, DesignError):
            continue
        if fit.converged and np.isfinite(fit.stderr) and fit.stderr > 0:
            out[b] = fit.estimate / fit.stderr
    return out


def _distribution(stats, method, scheme, B, seed, exhaustive=False, max_failure_rate=MAX_FAILURE_RATE):
    ok = np.isfinite(stats)
    n_failed = int((~ok).sum())
    if n_failed > max_failure_rate * len(stats):
        raise ResamplingError(
            f"{n_failed} of {len(stats)} resampled fits failed "
            f"(limit {max_failure_rate:.0%}); {method} null not usable"
        )
    return EmpiricalDistribution(stats[ok], method, scheme, B, seed, n_failed, exhaustive)


def empirical_null_permutation(dataset, model_spec: str, analysis: str, B: int = 1000,
                               seed=None, tau: float = DEFAULT_TAU,
                               exhaustive: bool = False) -> EmpiricalDistribution:
    """Null distribution by label shuffling with group sizes preserved.

    With ``exhaustive=True`` every one of the C(n, n1) label assignments is
    used once and ``B`` is ignored.
    """
    if exhaustive:
        arms = all_label_assignments(dataset.arm)
        B = len(arms)
    else:
        if B < MIN_B:
            raise ValueError(f"B must be at least {MIN_B}, got {B}")
        arms = permutation_arms(dataset.arm, B, seed)
    stats = null_statistics(dataset, model_spec, analysis, arms, tau)
    return _distribution(stats, "permutation", None, B, seed, exhaustive)


def empirical_null_rerandomization(dataset, model_spec: str, analysis: str, scheme: str,
                                   B: int = 1000, seed=None, q: float = 0.7,
                                   block_size: int = 4,
                                   tau: float = DEFAULT_TAU) -> EmpiricalDistribution:
    """Null distribution by re-running the allocation ``scheme``."""
    if B < MIN_B:
        raise ValueError(f"B must be at least {MIN_B}, got {B}")
    scheme = normalize_scheme(scheme)
    arms = rerandomization_arms(dataset, scheme, B, seed, q=q, block_size=block_size)
    stats = null_statistics(dataset, model_spec, analysis, arms, tau)
    return _distribution(stats, "rerandomization", scheme, B, seed)


# -- critical values, intervals, decisions -----------------------------------

def quantile(dist, upper_tail_mass: float) -> float:
    """Upper ``upper_tail_mass`` point: the ceil((1 - m) B)-th order statistic."""
    if not 0.0 < upper_tail_mass < 1.0:
        raise ValueError("upper_tail_mass must lie in (0, 1)")
    stats = dist.stats if isinstance(dist, EmpiricalDistribution) else np.sort(np.asarray(dist, float))
    B = len(stats)
    # Guard against 0.975 * 1000 evaluating to 975.0000000000001.
    k = math.ceil((1.0 - upper_tail_mass) * B - 1e-9)
    return float(stats[min(max(k, 1), B) - 1])


def critical_values(alpha: float, dist=None) -> tuple[float, float]:
    """(upper, lower) critical values for one-sided level ``alpha`` each."""
    if dist is None:
        z = float(norm.ppf(1.0 - alpha))
        return z, -z
    return quantile(dist, alpha), quantile(dist, 1.0 - alpha)


def wald_ci(fit: FitResult, alpha: float = 0.05) -> tuple[float, float]:
    z = float(norm.ppf(1.0 - alpha / 2))
    return fit.estimate - z * fit.stderr, fit.estimate + z * fit.stderr


def adjusted_ci(fit: FitResult, dist: EmpiricalDistribution, alpha: float = 0.05) -> AdjustedCI:
    """Two-sided 100(1 - alpha)% interval inverting the resampling test.

    [b - q_hi SE, b - q_lo SE] with q_hi the upper alpha/2 point and q_lo the
    lower alpha/2 point of the null statistics.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    q_hi, q_lo = critical_values(alpha / 2, dist)
    b, se = fit.estimate, fit.stderr
    return AdjustedCI(b - q_hi * se, b - q_lo * se, alpha, dist.method, (q_hi, q_lo))


def test_noninferiority(fit: FitResult, margin_neg: float, alpha: float = 0.025,
                        dist: EmpiricalDistribution | None = None) -> bool:
    """Reject H0: beta_1 <= margin_neg iff T(margin_neg) exceeds the critical
    value (normal quantile when ``dist`` is None)."""
    c_hi, _ = critical_values(alpha, dist)
    return wald_stat(fit, margin_neg).value > c_hi


def test_equivalence(fit: FitResult, margin_L: float, margin_U: float, alpha: float = 0.025,
                     dist: EmpiricalDistribution | None = None) -> bool:
    """Two one-sided tests of -margin_L < beta_1 < margin_U, each at ``alpha``."""
    if margin_L <= 0 or margin_U <= 0:
        raise ValueError("equivalence margins must be positive")
    c_hi, c_lo = critical_values(alpha, dist)
    return wald_stat(fit, -margin_L).value > c_hi and wald_stat(fit, margin_U).value < c_lo


test_noninferiority.__test__ = False
test_equivalence.__test__ = False
