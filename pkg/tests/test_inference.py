import math

import numpy as np
import pytest
from scipy import stats

from carinfer import dgm
from carinfer.alloc import randomize_sequence
from carinfer.estimators import FitResult, fit_model
from carinfer.inference import (
    EmpiricalDistribution,
    ResamplingError,
    adjusted_ci,
    critical_values,
    empirical_null_permutation,
    empirical_null_rerandomization,
    null_statistics,
    permutation_arms,
    quantile,
    rerandomization_arms,
    test_equivalence as equivalence,
    test_noninferiority as noninferiority,
    wald_ci,
    wald_stat,
)

from oracles import enumerate_permutation_null, six_subject_dataset

Z975 = 1.959963984540054


def point_fit(estimate, se):
    return FitResult(beta=np.array([0.0, estimate]), se=np.array([1.0, se]),
                     vcov=np.diag([1.0, se * se]), converged=True, iterations=1,
                     model_kind="ols")


def dist_of(values, method="permutation"):
    return EmpiricalDistribution(np.asarray(values, float), method, B=len(values))


@pytest.fixture(scope="module")
def car_normal():
    """200 subjects randomized by minimization with a normal outcome at A = -3."""
    cov = dgm.gen_covariates(200, 31)
    arms = np.array(randomize_sequence("ps", cov.subjects(), 32), dtype=np.int64)
    return dgm.gen_outcome(dgm.ScenarioParams("normal", -3.0), cov, arms, 33)


@pytest.fixture(scope="module")
def six():
    return six_subject_dataset()


class TestWald:
    def test_examples(self):
        assert wald_stat(point_fit(0.0, 1.0), -3).value == 3.0
        assert wald_stat(point_fit(1.0, 0.5), 0).value == 2.0

    def test_margin_shift(self):
        fit = point_fit(0.7, 0.3)
        assert wald_stat(fit, -1).value - wald_stat(fit, 0).value == pytest.approx(1 / 0.3)

    def test_nonpositive_se(self):
        with pytest.raises(ValueError):
            wald_stat(point_fit(1.0, 0.0))


class TestQuantile:
    def test_order_statistic(self):
        assert quantile(dist_of(np.arange(1, 1001)), 0.025) == 975
        assert quantile(dist_of(np.arange(1, 1001)), 0.975) == 25

    def test_median(self):
        assert quantile(dist_of([-2.0, -1.0, 0.0, 1.0, 2.0]), 0.5) == 0.0

    def test_standard_normal(self):
        draws = np.random.default_rng(0).standard_normal(100_000)
        assert quantile(dist_of(draws), 0.025) == pytest.approx(1.96, abs=0.03)

    def test_invalid_mass(self):
        with pytest.raises(ValueError):
            quantile(dist_of([1.0, 2.0]), 1.0)

    def test_asymptotic_critical_value(self):
        assert critical_values(0.025) == pytest.approx((Z975, -Z975), abs=1e-12)


class TestDecisions:
    def test_ni_example(self):
        assert noninferiority(point_fit(0.0, 1.0), -3)

    def test_ni_boundary_fails(self):
        # T(-1) equals the critical value exactly.
        d = dist_of(np.linspace(-2, 2, 1001))
        c = quantile(d, 0.025)
        fit = point_fit(c - 1.0, 1.0)
        assert wald_stat(fit, -1).value == c
        assert not noninferiority(fit, -1, dist=d)

    def test_eq_examples(self):
        assert equivalence(point_fit(0.0, 0.5), 3, 3)
        assert not equivalence(point_fit(3.0, 0.5), 3, 3)
        assert not equivalence(point_fit(-3.0, 0.5), 3, 3)

    def test_eq_needs_positive_margins(self):
        with pytest.raises(ValueError):
            equivalence(point_fit(0.0, 0.5), -3, 3)

    @pytest.mark.parametrize("est", np.linspace(-4, 2, 13))
    def test_ni_monotone_in_margin(self, est):
        fit = point_fit(est, 0.9)
        decisions = [noninferiority(fit, -m) for m in np.linspace(0, 6, 61)]
        first = decisions.index(True) if True in decisions else len(decisions)
        assert all(decisions[first:])

    def test_margin_does_not_change_distribution(self, car_normal):
        d1 = empirical_null_permutation(car_normal, "naive", "normal", 200, seed=1)
        fit = fit_model(car_normal, "naive", "normal")
        noninferiority(fit, -3, dist=d1)
        noninferiority(fit, -1, dist=d1)
        d2 = empirical_null_permutation(car_normal, "naive", "normal", 200, seed=1)
        np.testing.assert_array_equal(d1.stats, d2.stats)

    @pytest.mark.parametrize("margin", [0.5, 1.0, 2.0, 3.0, 4.0])
    def test_duality_with_adjusted_bound(self, car_normal, margin):
        fit = fit_model(car_normal, "naive", "normal")
        d = empirical_null_permutation(car_normal, "naive", "normal", 500, seed=4)
        ci = adjusted_ci(fit, d, alpha=2 * 0.025)
        assert noninferiority(fit, -margin, 0.025, d) == (ci.lower > -margin)
        lo, _ = wald_ci(fit, 0.05)
        assert noninferiority(fit, -margin, 0.025) == (lo > -margin)


class TestAdjustedCI:
    def test_normal_quantiles_reproduce_wald(self):
        # Normal quantiles at (k - 0.5)/B; the 0.975 order statistic is within
        # 1e-4 of z for B = 1e5.
        B = 100_000
        grid = stats.norm.ppf((np.arange(1, B + 1) - 0.5) / B)
        fit = point_fit(0.4, 0.8)
        ci = adjusted_ci(fit, dist_of(grid), 0.05)
        lo, hi = wald_ci(fit, 0.05)
        assert ci.lower == pytest.approx(lo, abs=1e-4)
        assert ci.upper == pytest.approx(hi, abs=1e-4)

    def test_exact_quantile_points(self):
        # With B = 39 the alpha/2 = 0.025 points are the two extremes.
        d = dist_of([-Z975] + [0.0] * 37 + [Z975])
        fit = point_fit(0.4, 0.8)
        ci = adjusted_ci(fit, d, 0.05)
        lo, hi = wald_ci(fit, 0.05)
        assert ci.lower == pytest.approx(lo, abs=1e-6)
        assert ci.upper == pytest.approx(hi, abs=1e-6)

    def test_smaller_variance_narrower(self):
        draws = 0.8 * np.random.default_rng(1).standard_normal(10_000)
        fit = point_fit(0.0, 1.0)
        ci = adjusted_ci(fit, dist_of(draws), 0.05)
        lo, hi = wald_ci(fit, 0.05)
        assert lo < ci.lower < ci.upper < hi

    def test_asymmetric_order(self):
        d = dist_of(np.concatenate([np.linspace(-1, 0, 50), np.linspace(0, 3, 50)]))
        ci = adjusted_ci(point_fit(0.0, 1.0), d, 0.1)
        q_hi, q_lo = ci.quantiles
        assert q_hi > 2 and q_lo > -1.01
        assert ci.lower == -q_hi and ci.upper == -q_lo


class TestExhaustivePermutation:
    def test_matches_enumeration(self, six):
        dist = empirical_null_permutation(six, "naive", "normal", exhaustive=True)
        oracle = enumerate_permutation_null(six)
        assert len(dist) == math.comb(6, 3) == 20
        np.testing.assert_allclose(dist.stats, oracle, atol=1e-12)

    def test_ci_inverts_test(self, six):
        dist = empirical_null_permutation(six, "naive", "normal", exhaustive=True)
        fit = fit_model(six, "naive", "normal")
        alpha = 0.1
        ci = adjusted_ci(fit, dist, alpha)
        q_hi = quantile(enumerate_permutation_null(six), alpha / 2)
        q_lo = quantile(enumerate_permutation_null(six), 1 - alpha / 2)

        def accepted(delta):
            t = (fit.estimate - delta) / fit.stderr
            return q_lo <= t <= q_hi

        grid = np.linspace(fit.estimate - 20, fit.estimate + 20, 400_001)
        inside = grid[[accepted(d) for d in grid]]
        step = grid[1] - grid[0]
        assert ci.lower == pytest.approx(inside.min(), abs=step)
        assert ci.upper == pytest.approx(inside.max(), abs=step)

    def test_monte_carlo_with_all_assignments_matches(self, six):
        # B uniform draws: every assignment appears and frequencies agree.
        arms = permutation_arms(six.arm, 20_000, seed=0)
        codes = arms @ (1 << np.arange(6))
        counts = np.bincount(codes, minlength=64)
        hit = counts[counts > 0]
        assert len(hit) == 20
        assert stats.chisquare(hit).pvalue > 0.001


class TestResampling:
    def test_permutation_preserves_group_sizes(self, car_normal):
        arms = permutation_arms(car_normal.arm, 50, seed=3)
        assert np.all(arms.sum(axis=1) == car_normal.arm.sum())

    def test_permutation_reproducible(self, car_normal):
        a = empirical_null_permutation(car_normal, "model1", "normal", 200, seed=7)
        b = empirical_null_permutation(car_normal, "model1", "normal", 200, seed=7)
        np.testing.assert_array_equal(a.stats, b.stats)

    def test_rerandomization_reproducible(self, car_normal):
        a = empirical_null_rerandomization(car_normal, "naive", "normal", "ps", 200, seed=7)
        b = empirical_null_rerandomization(car_normal, "naive", "normal", "ps", 200, seed=7)
        np.testing.assert_array_equal(a.stats, b.stats)

    def test_rerandomization_columns_follow_subjects(self, car_normal):
        # SPBR keeps every stratum within two of balance whatever the order.
        arms = rerandomization_arms(car_normal, "spbr", 100, seed=2)
        strata = car_normal.strata
        for s in np.unique(strata):
            diff = (2 * arms[:, strata == s].astype(int) - 1).sum(axis=1)
            assert np.all(np.abs(diff) <= 2)

    def test_car_null_is_conservative(self, car_normal):
        d = empirical_null_rerandomization(car_normal, "naive", "normal", "ps", 1000, seed=11)
        assert np.var(d.stats) < 1

    @pytest.mark.parametrize("seed", range(3))
    def test_complete_matches_permutation(self, car_normal, seed):
        a = empirical_null_rerandomization(car_normal, "naive", "normal", "complete", 1000,
                                           seed=seed)
        b = empirical_null_permutation(car_normal, "naive", "normal", 1000, seed=seed + 100)
        assert stats.ks_2samp(a.stats, b.stats).pvalue > 0.01

    def test_fast_path_matches_direct_fits(self, car_normal):
        arms = permutation_arms(car_normal.arm, 5, seed=0)
        fast = null_statistics(car_normal, "model2", "normal", arms)
        for b, arm in enumerate(arms):
            fit = fit_model(car_normal, "model2", "normal", arm=arm)
            assert fast[b] == pytest.approx(fit.estimate / fit.stderr, rel=1e-9)

    def test_b_below_minimum(self, car_normal):
        with pytest.raises(ValueError, match="at least"):
            empirical_null_permutation(car_normal, "naive", "normal", 50)

    def test_failures_abort(self):
        # One event: the partial likelihood is monotone in the arm effect under
        # every relabeling, so nearly all resampled Cox fits diverge.
        cov = dgm.gen_covariates(8, 0)
        d = cov.with_columns(arm=np.array([1, 0] * 4), time=np.arange(1.0, 9.0),
                             event=np.array([1] + [0] * 7))
        with pytest.raises(ResamplingError, match="failed"):
            empirical_null_permutation(d, "naive", "cox", 100, seed=0)
