"""Sequential treatment allocation.

Four schemes are provided: Pocock-Simon minimization with a biased coin,
Taves minimization (the deterministic ``q = 1`` limit), stratified permuted
block randomization (SPBR) and complete randomization.

Every assignment consumes exactly one uniform draw ``u`` and allocates the
treatment arm iff ``u < p``, where ``p`` is the scheme's probability for
treatment given the current state. Feeding the same uniforms to the
single-trial API (:class:`AllocationState`) and to the vectorized
:func:`assign_batch` therefore gives the same arms; the latter is what the
re-randomization null uses, with one row per resample.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import rng as _rng

N_SITES = 10
STATUS_LEVELS = ("low", "medium", "high")
SEX_LEVELS = ("female", "male")

# Factor levels are flattened into one index space: sites 0..9, disease
# status 10..12, sex 13..14.
_STATUS_OFFSET = N_SITES
_SEX_OFFSET = N_SITES + len(STATUS_LEVELS)
N_LEVELS = _SEX_OFFSET + len(SEX_LEVELS)
N_FACTORS = 3
N_STRATA = N_SITES * len(STATUS_LEVELS) * len(SEX_LEVELS)

SCHEMES = ("ps", "taves", "spbr", "complete")
_SCHEME_ALIASES = {"car": "ps", "pocock_simon": "ps", "minimization": "taves"}


class Arm(IntEnum):
    CONTROL = 0
    TREATMENT = 1


def disease_status(baseline):
    """0 (low) for baseline < 25, 2 (high) for baseline > 35, else 1."""
    b = np.asarray(baseline, dtype=float)
    status = np.where(b < 25.0, 0, np.where(b > 35.0, 2, 1))
    return int(status) if status.ndim == 0 else status


@dataclass(frozen=True)
class Subject:
    id: int
    site: int
    baseline: float
    male: bool

    def __post_init__(self):
        if not 1 <= self.site <= N_SITES:
            raise ValueError(f"site must be in 1..{N_SITES}, got {self.site}")

    @property
    def disease_status(self) -> str:
        return STATUS_LEVELS[disease_status(self.baseline)]

    @property
    def sex(self) -> str:
        return "male" if self.male else "female"

    @property
    def levels(self) -> tuple[int, int, int]:
        """Flat indices of this subject's site, status and sex levels."""
        return (
            self.site - 1,
            _STATUS_OFFSET + disease_status(self.baseline),
            _SEX_OFFSET + int(self.male),
        )

    @property
    def stratum(self) -> int:
        return stratum_index(self.site, self.baseline, self.male)


def factor_levels(site, baseline, male) -> np.ndarray:
    """(n, 3) array of flat level indices for vectors of covariates."""
    site = np.asarray(site, dtype=np.int64)
    if site.size and (site.min() < 1 or site.max() > N_SITES):
        raise ValueError(f"site values must lie in 1..{N_SITES}")
    return np.column_stack(
        [
            site - 1,
            _STATUS_OFFSET + disease_status(np.atleast_1d(baseline)),
            _SEX_OFFSET + np.asarray(male, dtype=np.int64),
        ]
    ).astype(np.int64)


def stratum_index(site, baseline, male):
    status = disease_status(baseline)
    return (np.asarray(site) - 1) * 6 + np.asarray(status) * 2 + np.asarray(male, dtype=np.int64)


def normalize_scheme(scheme: str) -> str:
    s = _SCHEME_ALIASES.get(scheme.lower(), scheme.lower())
    if s not in SCHEMES:
        raise ValueError(f"unknown randomization scheme {scheme!r}; expected one of {SCHEMES}")
    return s


@dataclass
class AllocationState:
    """Running state of one trial's allocation.

    ``counts[level, arm]`` holds the number of subjects seen so far with a
    given factor level in each arm. ``blocks`` maps a stratum to the number
    of treatment and control slots still open in its current block; drawing
    the next arm with probability proportional to the open slots produces a
    uniformly random permutation of each block.
    """

    q: float = 0.7
    block_size: int = 4
    seed: object = None
    counts: np.ndarray = field(default_factory=lambda: np.zeros((N_LEVELS, 2), dtype=np.int64))
    blocks: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.5 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0.5, 1], got {self.q}")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError(f"block_size must be a positive even integer, got {self.block_size}")
        self._rng = _rng.generator(self.seed)

    def draw(self) -> float:
        return float(self._rng.random())

    def record(self, subject: Subject, arm: int) -> None:
        arm = int(arm)
        for lv in subject.levels:
            self.counts[lv, arm] += 1
        self.log.append((subject, Arm(arm)))


def hypothetical_imbalance(state: AllocationState, subject: Subject, arm: int) -> int:
    """Sum over the subject's factor levels of |N1 - N0| after a hypothetical
    assignment to ``arm``."""
    sign = 1 if int(arm) == 1 else -1
    total = 0
    for lv in subject.levels:
        total += abs(int(state.counts[lv, 1]) - int(state.counts[lv, 0]) + sign)
    return total


def minimization_probability(g1: int, g0: int, q: float) -> float:
    if g1 == g0:
        return 0.5
    return q if g1 < g0 else 1.0 - q


def assign_pocock_simon(state: AllocationState, subject: Subject, u: float | None = None) -> Arm:
    g1 = hypothetical_imbalance(state, subject, 1)
    g0 = hypothetical_imbalance(state, subject, 0)
    p = minimization_probability(g1, g0, state.q)
    u = state.draw() if u is None else u
    arm = Arm(int(u < p))
    state.record(subject, arm)
    return arm


def assign_taves(state: AllocationState, subject: Subject, u: float | None = None) -> Arm:
    g1 = hypothetical_imbalance(state, subject, 1)
    g0 = hypothetical_imbalance(state, subject, 0)
    p = minimization_probability(g1, g0, 1.0)
    u = state.draw() if u is None else u
    arm = Arm(int(u < p))
    state.record(subject, arm)
    return arm


def assign_spbr(state: AllocationState, subject: Subject, u: float | None = None) -> Arm:
    key = subject.stratum
    open1, open0 = state.blocks.get(key, (0, 0))
    if open1 + open0 == 0:
        open1 = open0 = state.block_size // 2
    u = state.draw() if u is None else u
    arm = Arm(int(u < open1 / (open1 + open0)))
    if arm:
        open1 -= 1
    else:
        open0 -= 1
    state.blocks[key] = (open1, open0)
    state.record(subject, arm)
    return arm


def assign_complete(state: AllocationState, subject: Subject | None = None,
                    u: float | None = None) -> Arm:
    u = state.draw() if u is None else u
    arm = Arm(int(u < 0.5))
    if subject is not None:
        state.record(subject, arm)
    return arm


_ASSIGNERS = {
    "ps": assign_pocock_simon,
    "taves": assign_taves,
    "spbr": assign_spbr,
    "complete": assign_complete,
}


def randomize_sequence(scheme: str, subjects, seed=None, q: float = 0.7,
                       block_size: int = 4) -> list[Arm]:
    """Assign ``subjects`` (in enrollment order) from an empty state.

    One uniform per subject is drawn up front, so the draw used for the
    i-th subject does not depend on the scheme or on earlier decisions.
    """
    assign = _ASSIGNERS[normalize_scheme(scheme)]
    subjects = list(subjects)
    state = AllocationState(q=q, block_size=block_size, seed=0)
    uniforms = _rng.generator(seed).random(len(subjects))
    return [assign(state, s, u=u) for s, u in zip(subjects, uniforms)]


def assign_batch(scheme: str, levels: np.ndarray, strata: np.ndarray, uniforms: np.ndarray,
                 q: float = 0.7, block_size: int = 4) -> np.ndarray:
    """Run ``B`` independent allocation sequences at once.

    Parameters
    ----------
    levels : (B, n, 3) or (n, 3) int array
        Flat factor levels of the subject enrolled at each position.
    strata : (B, n) or (n,) int array
        SPBR stratum of the subject at each position.
    uniforms : (B, n) float array
        One uniform per position and sequence.

    Returns
    -------
    (B, n) int8 array of arms in enrollment position order.
    """
    scheme = normalize_scheme(scheme)
    uniforms = np.atleast_2d(uniforms)
    B, n = uniforms.shape
    if scheme == "complete":
        return (uniforms < 0.5).astype(np.int8)

    arms = np.empty((B, n), dtype=np.int8)
    rows = np.arange(B)
    if scheme == "spbr":
        strata = np.broadcast_to(strata, (B, n))
        half = block_size // 2
        open1 = np.zeros((B, N_STRATA), dtype=np.int64)
        open0 = np.zeros((B, N_STRATA), dtype=np.int64)
        for i in range(n):
            s = strata[:, i]
            o1 = open1[rows, s]
            o0 = open0[rows, s]
            fresh = (o1 + o0) == 0
            o1 = np.where(fresh, half, o1)
            o0 = np.where(fresh, half, o0)
            a = uniforms[:, i] < o1 / (o1 + o0)
            open1[rows, s] = o1 - a
            open0[rows, s] = o0 - ~a
            arms[:, i] = a
        return arms

    if scheme == "taves":
        q = 1.0
    if not 0.5 < q <= 1.0:
        raise ValueError(f"q must lie in (0.5, 1], got {q}")
    levels = np.broadcast_to(levels, (B, n, N_FACTORS))
    # Imbalance N1 - N0 per level is all the state minimization needs.
    diff = np.zeros((B, N_LEVELS), dtype=np.int64)
    r = rows[:, None]
    for i in range(n):
        lv = levels[:, i, :]
        d = diff[r, lv]
        g1 = np.abs(d + 1).sum(axis=1)
        g0 = np.abs(d - 1).sum(axis=1)
        p = np.where(g1 == g0, 0.5, np.where(g1 < g0, q, 1.0 - q))
        a = uniforms[:, i] < p
        diff[r, lv] = d + np.where(a, 1, -1)[:, None]
        arms[:, i] = a
    return arms
