"""Monte Carlo study of bias, type-I error and power.

Each replicate generates one trial (covariates, allocation, outcomes), fits
every requested analysis model, and applies the asymptotic (T), permutation
(PT) and re-randomization (RT) versions of the non-inferiority and
equivalence tests to that same trial.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from . import dgm
from . import rng as _rng
from .alloc import randomize_sequence
from .estimators import MODEL_SPECS, DesignError, SingularDesignError, fit_model
from .inference import (
    ResamplingError,
    _distribution,
    null_statistics,
    permutation_arms,
    rerandomization_arms,
    test_equivalence,
    test_noninferiority,
    wald_stat,
)

VARIABLES = ("normal", "binary", "cox", "rmst")
OUTCOME_OF = {"normal": "normal", "binary": "binary", "cox": "tte", "rmst": "tte"}
# Null-boundary effects of the simulation study, used as default margins.
DEFAULT_MARGIN = {"normal": 3.0, "binary": 1.0, "cox": 0.5, "rmst": 0.29122}
PROCEDURES = ("asymptotic", "permutation", "rerandomization")
PROCEDURE_CODE = {"asymptotic": "T", "permutation": "PT", "rerandomization": "RT"}
SCHEME_CODE = {"car": "CAR", "spbr": "SPBR"}
WORKERS_ENV = "CARINFER_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    variable: str = "normal"
    effect_A: float = 0.0
    scheme: str = "car"
    models: tuple = MODEL_SPECS
    procedures: tuple = PROCEDURES
    n_per_arm: int = 100
    censor_prob: float = 0.1
    cutoff: float = 100.0
    tau: float = 80.0
    q: float = 0.7
    block_size: int = 4
    margin_ni: float | None = None
    margin_eq_lower: float | None = None
    margin_eq_upper: float | None = None
    true_value: float | None = None
    pseudo_true_n: int = 1_000_000
    n_sims: int = 1000
    B: int = 1000
    alpha_one_sided: float = 0.025
    alpha_two_sided: float = 0.05
    master_seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ConfigError(f"variable must be one of {VARIABLES}, got {self.variable!r}")
        if self.scheme not in SCHEME_CODE:
            raise ConfigError(f"scheme must be 'car' or 'spbr', got {self.scheme!r}")
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "procedures", tuple(self.procedures))
        for m in self.models:
            if m not in MODEL_SPECS:
                raise ConfigError(f"unknown model {m!r}; expected a subset of {MODEL_SPECS}")
        for p in self.procedures:
            if p not in PROCEDURES:
                raise ConfigError(f"unknown procedure {p!r}; expected a subset of {PROCEDURES}")
        default = DEFAULT_MARGIN[self.variable]
        for name in ("margin_ni", "margin_eq_lower", "margin_eq_upper"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_sims < 1:
            raise ConfigError("n_sims must be at least 1")
        if self.B < 100 and set(self.procedures) - {"asymptotic"}:
            raise ConfigError("B must be at least 100 for resampling procedures")
        for name in ("alpha_one_sided", "alpha_two_sided"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = list(self.models)
        d["procedures"] = list(self.procedures)
        return d

    def params(self) -> dgm.ScenarioParams:
        return dgm.ScenarioParams(
            outcome_kind=OUTCOME_OF[self.variable],
            effect_A=self.effect_A,
            n_per_arm=self.n_per_arm,
            censor_prob=self.censor_prob,
            cutoff=self.cutoff,
            tau=self.tau,
        )

    @property
    def alloc_scheme(self) -> str:
        return "ps" if self.scheme == "car" else "spbr"


@lru_cache(maxsize=32)
def _pseudo_true(A, tau, n_mc, seed, cutoff):
    return dgm.pseudo_true_rmst_coef(A, tau, n_mc, seed, cutoff=cutoff)


def true_coefficient(config: SimConfig) -> float:
    """Target of the treatment coefficient: A, or for RMST the large-sample
    limit of the naive RMST fit."""
    if config.true_value is not None:
        return float(config.true_value)
    if config.variable != "rmst" or config.effect_A == 0:
        return float(config.effect_A)
    return _pseudo_true(config.effect_A, config.tau, config.pseudo_true_n, config.master_seed,
                        config.cutoff)


def simulate_dataset(config: SimConfig, index: int):
    """The trial data of replicate ``index``."""
    seed = config.master_seed
    cov = dgm.gen_covariates(2 * config.n_per_arm, _rng.generator(seed, index, _rng.COVARIATES))
    arms = randomize_sequence(
        config.alloc_scheme, cov.subjects(), _rng.generator(seed, index, _rng.ALLOCATION),
        q=config.q, block_size=config.block_size,
    )
    return dgm.gen_outcome(config.params(), cov, np.asarray(arms, dtype=np.int64),
                           _rng.generator(seed, index, _rng.OUTCOME))


@dataclass
class CellResult:
    estimate: float = math.nan
    se: float = math.nan
    stat_ni: float = math.nan
    reject_ni: bool | None = None
    reject_eq: bool | None = None

    @property
    def failed(self) -> bool:
        return self.reject_ni is None


@dataclass
class ReplicateResult:
    index: int
    cells: dict = field(default_factory=dict)  # (model, procedure) -> CellResult


def run_replicate(config: SimConfig, index: int, dataset=None) -> ReplicateResult:
    data = simulate_dataset(config, index) if dataset is None else dataset
    seed = config.master_seed
    a1 = config.alpha_one_sided
    a_eq = config.alpha_two_sided / 2

    arm_sets = {}
    if "permutation" in config.procedures:
        arm_sets["permutation"] = permutation_arms(
            data.arm, config.B, _rng.generator(seed, index, _rng.PERMUTATION))
    if "rerandomization" in config.procedures:
        arm_sets["rerandomization"] = rerandomization_arms(
            data, config.alloc_scheme, config.B,
            _rng.generator(seed, index, _rng.RERANDOMIZATION),
            q=config.q, block_size=config.block_size)

    result = ReplicateResult(index)
    for model in config.models:
        try:
            fit = fit_model(data, model, config.variable, tau=config.tau)
            ok = fit.converged and np.isfinite(fit.stderr) and fit.stderr > 0
        except (SingularDesignError, DesignError, ValueError):
            ok = False
        for proc in config.procedures:
            cell = CellResult()
            result.cells[(model, proc)] = cell
            if not ok:
                continue
            cell.estimate, cell.se = fit.estimate, fit.stderr
            cell.stat_ni = wald_stat(fit, -config.margin_ni).value
            dist = None
            if proc != "asymptotic":
                stats = null_statistics(data, model, config.variable, arm_sets[proc], config.tau)
                try:
                    dist = _distribution(stats, proc, config.alloc_scheme, config.B, seed)
                except ResamplingError:
                    continue
            cell.reject_ni = test_noninferiority(fit, -config.margin_ni, a1, dist)
            cell.reject_eq = test_equivalence(fit, config.margin_eq_lower, config.margin_eq_upper,
                                              a_eq, dist)
    return result


def _run_chunk(config: SimConfig, indices) -> list[ReplicateResult]:
    return [run_replicate(config, i) for i in indices]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_replicates(config: SimConfig, workers: int | None = None) -> list[ReplicateResult]:
    workers = default_workers() if workers is None else max(1, workers)
    indices = list(range(config.n_sims))
    if workers == 1:
        return _run_chunk(config, indices)
    size = max(1, math.ceil(len(indices) / (4 * workers)))
    chunks = [indices[i:i + size] for i in range(0, len(indices), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [config] * len(chunks), chunks))
    return [r for part in parts for r in part]


@dataclass
class CellSummary:
    model: str
    procedure: str
    label: str
    n_valid: int
    nonconvergence_count: int
    bias_mean: float
    rejection_rate_NI: float
    rejection_rate_EQ: float
    mc_stderr: float
    mc_stderr_EQ: float


@dataclass
class ScenarioReport:
    config: SimConfig
    true_value: float
    cells: list

    def cell(self, model: str, procedure: str) -> CellSummary:
        procedure = {v: k for k, v in PROCEDURE_CODE.items()}.get(procedure, procedure)
        for c in self.cells:
            if c.model == model and c.procedure == procedure:
                return c
        raise KeyError((model, procedure))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "true_value": self.true_value,
            "cells": [asdict(c) for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioReport":
        return cls(SimConfig.from_dict(d["config"]), d["true_value"],
                   [CellSummary(**c) for c in d["cells"]])


def _rate(values):
    if not values:
        return math.nan, math.nan
    r = sum(values) / len(values)
    return r, math.sqrt(r * (1 - r) / len(values))


def aggregate(config: SimConfig, true_value: float, replicates) -> ScenarioReport:
    """Reduce replicate results (in index order) to per-cell summaries.
    Failed cells are excluded from every denominator and counted."""
    replicates = sorted(replicates, key=lambda r: r.index)
    cells = []
    for model in config.models:
        for proc in config.procedures:
            outcomes = [r.cells[(model, proc)] for r in replicates]
            valid = [c for c in outcomes if not c.failed]
            bias = (math.fsum(c.estimate - true_value for c in valid) / len(valid)
                    if valid else math.nan)
            r_ni, se_ni = _rate([bool(c.reject_ni) for c in valid])
            r_eq, se_eq = _rate([bool(c.reject_eq) for c in valid])
            cells.append(CellSummary(
                model=model,
                procedure=proc,
                label=f"{PROCEDURE_CODE[proc]}_{SCHEME_CODE[config.scheme]}",
                n_valid=len(valid),
                nonconvergence_count=len(outcomes) - len(valid),
                bias_mean=bias,
                rejection_rate_NI=r_ni,
                rejection_rate_EQ=r_eq,
                mc_stderr=se_ni,
                mc_stderr_EQ=se_eq,
            ))
    return ScenarioReport(config, true_value, cells)


def run_scenario(config: SimConfig, workers: int | None = None, trace: list | None = None
                 ) -> ScenarioReport:
    """Run ``config.n_sims`` replicates and aggregate them.

    The report depends only on the config (master seed included), not on
    the number of workers. If ``trace`` is a list, one record per replicate,
    model and procedure is appended to it.
    """
    true_value = true_coefficient(config)
    replicates = run_replicates(config, workers)
    if trace is not None:
        for r in replicates:
            for (model, proc), c in r.cells.items():
                trace.append({
                    "replicate": r.index, "model": model, "procedure": proc,
                    "estimate": c.estimate, "se": c.se, "stat_ni": c.stat_ni,
                    "reject_ni": c.reject_ni, "reject_eq": c.reject_eq,
                })
    return aggregate(config, true_value, replicates)


# -- tables ------------------------------------------------------------------

@dataclass
class Table:
    title: str
    columns: list
    rows: list  # (variable, model, {column: value})


def _table_columns():
    return [f"{PROCEDURE_CODE[p]}_{s}" for s in ("CAR", "SPBR") for p in PROCEDURES]


def summarize(reports) -> dict[str, Table]:
    """Bias, type-I error and power tables.

    Reports with a nonzero effect feed the type-I table (rates in percent),
    reports with zero effect the power table; both split into
    non-inferiority and equivalence sections.
    """
    bias_cols = ["presence_CAR", "presence_SPBR", "absence_CAR", "absence_SPBR"]
    rate_cols = _table_columns()
    bias, t1_ni, t1_eq, pw_ni, pw_eq = {}, {}, {}, {}, {}
    for rep in reports:
        cfg = rep.config
        presence = "presence" if cfg.effect_A != 0 else "absence"
        scheme = SCHEME_CODE[cfg.scheme]
        for c in rep.cells:
            key = (cfg.variable, c.model)
            if c.procedure == "asymptotic" or f"{presence}_{scheme}" not in bias.get(key, {}):
                bias.setdefault(key, {})[f"{presence}_{scheme}"] = c.bias_mean
            ni, eq = (t1_ni, t1_eq) if cfg.effect_A != 0 else (pw_ni, pw_eq)
            ni.setdefault(key, {})[c.label] = 100 * c.rejection_rate_NI
            eq.setdefault(key, {})[c.label] = 100 * c.rejection_rate_EQ

    def ordered(d):
        order = {v: i for i, v in enumerate(VARIABLES)}
        morder = {m: i for i, m in enumerate(MODEL_SPECS)}
        keys = sorted(d, key=lambda k: (order[k[0]], morder[k[1]]))
        return [(k[0], k[1], d[k]) for k in keys]

    return {
        "bias": Table("Bias of the treatment coefficient", bias_cols, ordered(bias)),
        "type1_ni": Table("Type-I error rate (%), non-inferiority", rate_cols, ordered(t1_ni)),
        "type1_eq": Table("Type-I error rate (%), equivalence", rate_cols, ordered(t1_eq)),
        "power_ni": Table("Power (%), non-inferiority", rate_cols, ordered(pw_ni)),
        "power_eq": Table("Power (%), equivalence", rate_cols, ordered(pw_eq)),
    }


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.6g}"


def format_table(table: Table) -> str:
    header = ["variable", "model"] + table.columns
    body = [[var, model] + [_fmt(vals.get(c)) for c in table.columns]
            for var, model, vals in table.rows]
    widths = [max(len(r[j]) for r in [header] + body) for j in range(len(header))]
    lines = [table.title, "  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.ljust(w) if j < 2 else v.rjust(w) for j, (v, w) in
                        enumerate(zip(r, widths))) for r in body]
    return "\n".join(lines)


def format_tables(tables: dict[str, Table]) -> str:
    return "\n\n".join(format_table(t) for t in tables.values() if t.rows)


def reports_to_json(reports, tables=None) -> str:
    doc = {"scenarios": [r.to_dict() for r in reports]}
    if tables is not None:
        doc["tables"] = {
            name: {"title": t.title, "columns": t.columns,
                   "rows": [{"variable": v, "model": m, "values": vals} for v, m, vals in t.rows]}
            for name, t in tables.items()
        }
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"
