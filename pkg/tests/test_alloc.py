import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from carinfer import dgm
from carinfer.alloc import (
    N_LEVELS,
    AllocationState,
    Subject,
    assign_batch,
    assign_complete,
    assign_pocock_simon,
    assign_spbr,
    assign_taves,
    factor_levels,
    hypothetical_imbalance,
    randomize_sequence,
    stratum_index,
)

SUBJ = Subject(1, site=3, baseline=30.0, male=True)

subjects_st = st.lists(
    st.builds(
        Subject,
        id=st.integers(1, 10_000),
        site=st.integers(1, 10),
        baseline=st.floats(10, 50),
        male=st.booleans(),
    ),
    min_size=1,
    max_size=40,
)


def recount(log):
    counts = np.zeros((N_LEVELS, 2), dtype=int)
    for subject, arm in log:
        for lv in subject.levels:
            counts[lv, int(arm)] += 1
    return counts


def test_disease_status_thresholds():
    assert Subject(1, 1, 24.999, True).disease_status == "low"
    assert Subject(1, 1, 25.0, True).disease_status == "medium"
    assert Subject(1, 1, 35.0, True).disease_status == "medium"
    assert Subject(1, 1, 35.001, True).disease_status == "high"


def test_subject_rejects_unknown_site():
    with pytest.raises(ValueError):
        Subject(1, 11, 30.0, True)


class TestHypotheticalImbalance:
    def test_empty_state(self):
        state = AllocationState(seed=0)
        assert hypothetical_imbalance(state, SUBJ, 1) == 3
        assert hypothetical_imbalance(state, SUBJ, 0) == 3

    def test_symmetry_restores_balance(self):
        state = AllocationState(seed=0)
        state.record(SUBJ, 1)
        assert hypothetical_imbalance(state, SUBJ, 0) == 0
        assert hypothetical_imbalance(state, SUBJ, 1) == 6

    def test_matches_recount_from_log(self):
        rng = np.random.default_rng(11)
        state = AllocationState(seed=3)
        cov = dgm.gen_covariates(10, 5)
        for s in cov.subjects():
            assign_pocock_simon(state, s)
        probe = Subject(99, int(rng.integers(1, 11)), 28.0, False)
        counts = recount(state.log)
        for arm in (0, 1):
            sign = 1 if arm else -1
            brute = sum(abs(counts[lv, 1] - counts[lv, 0] + sign) for lv in probe.levels)
            assert hypothetical_imbalance(state, probe, arm) == brute


def frequency_of_treatment(assign, state, subject, n=100_000, seed=0):
    """Fraction of treatment over n draws from the same starting state."""
    counts, log = state.counts.copy(), list(state.log)
    hits = 0
    for u in np.random.default_rng(seed).random(n):
        hits += assign(state, subject, u=u)
        state.counts[:] = counts
        state.log[:] = log
    return hits / n


class TestPocockSimon:
    def test_first_subject_fair(self):
        freq = frequency_of_treatment(assign_pocock_simon, AllocationState(seed=0), SUBJ, seed=1)
        assert abs(freq - 0.5) < 0.01

    def test_biased_coin_toward_lagging_arm(self):
        state = AllocationState(q=0.7, seed=0)
        state.record(Subject(2, 3, 30.0, True), 0)
        assert hypothetical_imbalance(state, SUBJ, 1) < hypothetical_imbalance(state, SUBJ, 0)
        freq = frequency_of_treatment(assign_pocock_simon, state, SUBJ, seed=2)
        assert abs(freq - 0.7) < 0.01

    def test_q_one_equals_taves(self):
        subjects = dgm.gen_covariates(20, 4).subjects()
        u = np.random.default_rng(9).random(20)
        ps, tv = AllocationState(q=1.0, seed=0), AllocationState(seed=0)
        a = [assign_pocock_simon(ps, s, u=x) for s, x in zip(subjects, u)]
        b = [assign_taves(tv, s, u=x) for s, x in zip(subjects, u)]
        assert a == b

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            AllocationState(q=0.5)


class TestTaves:
    def test_deterministic_when_imbalanced(self):
        state = AllocationState(seed=0)
        state.record(SUBJ, 0)
        assert frequency_of_treatment(assign_taves, state, SUBJ, n=2000) == 1.0

    def test_balanced_state_fair(self):
        freq = frequency_of_treatment(assign_taves, AllocationState(seed=0), SUBJ, seed=5)
        assert abs(freq - 0.5) < 0.01

    def test_identical_subjects_pairwise_alternate(self):
        # Hand trace with u = (0.2, 0.2, 0.8, 0.8):
        # s1 tie -> u<0.5 -> T; s2 forced C; s3 tie -> u>=0.5 -> C; s4 forced T.
        state = AllocationState(seed=0)
        arms = [assign_taves(state, SUBJ, u=u) for u in (0.2, 0.2, 0.8, 0.8)]
        assert arms == [1, 0, 0, 1]
        # Every second subject of a pair is forced opposite to the first.
        out = randomize_sequence("taves", [SUBJ] * 40, seed=7)
        assert all(out[i] != out[i + 1] for i in range(0, 40, 2))


class TestSPBR:
    def test_block_of_four_balanced(self):
        state = AllocationState(seed=1)
        arms = [assign_spbr(state, SUBJ) for _ in range(4)]
        assert sum(arms) == 2

    def test_six_subjects_prefix_of_block(self):
        state = AllocationState(seed=2)
        arms = [assign_spbr(state, SUBJ) for _ in range(6)]
        assert sum(arms[:4]) == 2
        assert arms[4:] in ([0, 1], [1, 0], [0, 0], [1, 1])

    def test_first_block_patterns_uniform(self):
        # Oracle: the 6 arrangements of {1,1,0,0}, each with probability 1/6.
        from itertools import permutations
        patterns = sorted(set(permutations((1, 1, 0, 0))))
        assert len(patterns) == 6
        rng = np.random.default_rng(8)
        trials = 60_000
        u = rng.random((trials, 4))
        arms = assign_batch("spbr", None, np.zeros(4, dtype=int), u)
        codes = arms @ np.array([8, 4, 2, 1])
        freq = {p: np.mean(codes == np.dot(p, [8, 4, 2, 1])) for p in patterns}
        assert set(np.unique(codes)) == {np.dot(p, [8, 4, 2, 1]) for p in patterns}
        for f in freq.values():
            assert abs(f - 1 / 6) < 0.01

    @settings(max_examples=50, deadline=None)
    @given(subjects_st, st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6]))
    def test_hard_balance_within_stratum(self, subjects, seed, bs):
        arms = randomize_sequence("spbr", subjects, seed, block_size=bs)
        diff = {}
        for s, a in zip(subjects, arms):
            diff[s.stratum] = diff.get(s.stratum, 0) + (1 if a else -1)
            assert abs(diff[s.stratum]) <= bs // 2


class TestComplete:
    def test_fair(self):
        arms = randomize_sequence("complete", [SUBJ] * 100_000, seed=3)
        assert abs(np.mean(arms) - 0.5) < 0.005

    def test_independent_of_covariates(self):
        pvals = []
        for seed in range(40):
            cov = dgm.gen_covariates(400, seed)
            arms = np.array(randomize_sequence("complete", cov.subjects(), seed + 1000))
            table = np.array([[np.sum((cov.male == m) & (arms == a)) for a in (0, 1)]
                              for m in (False, True)])
            pvals.append(stats.chi2_contingency(table, correction=False)[1])
        assert stats.kstest(pvals, "uniform").pvalue > 0.001

    def test_reproducible(self):
        a = randomize_sequence("complete", [SUBJ] * 50, seed=12)
        b = randomize_sequence("complete", [SUBJ] * 50, seed=12)
        assert a == b

    def test_does_not_touch_state_without_subject(self):
        state = AllocationState(seed=0)
        assign_complete(state)
        assert state.counts.sum() == 0


class TestRandomizeSequence:
    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown randomization scheme"):
            randomize_sequence("urn", [SUBJ])

    @pytest.mark.parametrize("scheme", ["ps", "taves", "spbr", "complete"])
    def test_same_seed_same_arms(self, scheme):
        subjects = dgm.gen_covariates(60, 1).subjects()
        assert randomize_sequence(scheme, subjects, 5) == randomize_sequence(scheme, subjects, 5)

    def test_spbr_200_subjects_blocks_balanced(self):
        subjects = dgm.gen_covariates(200, 2).subjects()
        arms = randomize_sequence("spbr", subjects, 9)
        per_stratum = {}
        for s, a in zip(subjects, arms):
            per_stratum.setdefault(s.stratum, []).append(int(a))
        for seq in per_stratum.values():
            for k in range(0, len(seq) - len(seq) % 4, 4):
                assert sum(seq[k:k + 4]) == 2

    def test_minimization_reduces_imbalance(self):
        ps_imb, cr_imb = [], []
        for rep in range(500):
            cov = dgm.gen_covariates(200, rep)
            lv = cov.levels
            for scheme, out in (("ps", ps_imb), ("complete", cr_imb)):
                arms = np.array(randomize_sequence(scheme, cov.subjects(), 10_000 + rep))
                d = np.zeros(N_LEVELS)
                np.add.at(d, lv.ravel(), np.repeat(2 * arms - 1, 3))
                out.append(np.abs(d).mean())
        assert np.mean(ps_imb) < np.mean(cr_imb)

    @settings(max_examples=40, deadline=None)
    @given(subjects_st, st.integers(0, 2**32 - 1), st.sampled_from(["ps", "taves"]))
    def test_counts_match_log(self, subjects, seed, scheme):
        state = AllocationState(seed=seed)
        assign = assign_pocock_simon if scheme == "ps" else assign_taves
        for s in subjects:
            assign(state, s)
        np.testing.assert_array_equal(state.counts, recount(state.log))


@pytest.mark.parametrize("scheme", ["ps", "taves", "spbr", "complete"])
def test_batch_matches_sequential(scheme):
    cov = dgm.gen_covariates(80, 21)
    subjects = cov.subjects()
    rng = np.random.default_rng(4)
    u = rng.random((5, 80))
    batch = assign_batch(scheme, cov.levels, cov.strata, u, q=0.7)
    for b in range(5):
        state = AllocationState(q=0.7, seed=0)
        from carinfer.alloc import _ASSIGNERS
        seq = [_ASSIGNERS[scheme](state, s, u=x) for s, x in zip(subjects, u[b])]
        np.testing.assert_array_equal(batch[b], seq)


def test_levels_and_strata_vectorized():
    cov = dgm.gen_covariates(30, 1)
    lv = factor_levels(cov.site, cov.baseline, cov.male)
    for row, s in zip(lv, cov.subjects()):
        assert tuple(row) == s.levels
    np.testing.assert_array_equal(stratum_index(cov.site, cov.baseline, cov.male),
                                  [s.stratum for s in cov.subjects()])


@pytest.mark.parametrize("scheme", ["ps", "spbr", "complete"])
def test_marginal_treatment_probability_half(scheme):
    # Each subject's marginal P(arm = 1) over 1e4 replications.
    cov = dgm.gen_covariates(30, 3)
    u = np.random.default_rng(6).random((10_000, 30))
    arms = assign_batch(scheme, cov.levels, cov.strata, u)
    p = arms.mean(axis=0)
    tol = 4 * np.sqrt(0.25 / 10_000)
    assert np.all(np.abs(p - 0.5) < tol)
