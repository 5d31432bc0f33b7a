"""Command-line interface.

Exit codes: 0 success, 1 runtime abort, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import harness
from .alloc import SCHEMES, normalize_scheme, randomize_sequence
from .dataio import DatasetFormatError, read_dataset, write_dataset
from .dgm import pseudo_true_rmst_coef
from .estimators import ANALYSES, MODEL_SPECS, DesignError, SingularDesignError, fit_model
from .inference import (
    ResamplingError,
    adjusted_ci,
    empirical_null_permutation,
    empirical_null_rerandomization,
    test_equivalence,
    test_noninferiority,
    wald_ci,
    wald_stat,
)

log = logging.getLogger("carinfer")

EXIT_OK, EXIT_ABORT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- config ------------------------------------------------------------------

def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def load_configs(path) -> list[harness.SimConfig]:
    """Parse a JSON config: one SimConfig object, a list of them, or
    ``{"scenarios": [...]}``. Errors carry ``path:line:`` prefixes."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict) and set(doc) == {"scenarios"}:
        doc = doc["scenarios"]
    entries = doc if isinstance(doc, list) else [doc]
    configs = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise UsageError(f"{path}:1: scenario {k} is not a JSON object")
        unknown = sorted(set(entry) - {f for f in harness.SimConfig.__dataclass_fields__})
        if unknown:
            raise UsageError(f"{path}:{_line_of(text, unknown[0])}: unknown config key {unknown[0]!r}")
        try:
            configs.append(harness.SimConfig.from_dict(entry))
        except (harness.ConfigError, TypeError, ValueError) as exc:
            msg = str(exc)
            named = next((f for f in entry if f in msg), None)
            line = _line_of(text, named) if named else 1
            raise UsageError(f"{path}:{line}: {msg}") from exc
    return configs


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    configs = load_configs(args.config)
    reports, trace = [], [] if args.trace else None
    for k, cfg in enumerate(configs):
        log.info("scenario %d: %s A=%g %s, %d sims", k, cfg.variable, cfg.effect_A, cfg.scheme,
                 cfg.n_sims)
        reports.append(harness.run_scenario(cfg, workers=args.workers, trace=trace))
        if trace is not None:
            for rec in trace:
                rec.setdefault("scenario", k)
        if args.dump_data:
            out = Path(args.dump_data)
            out.mkdir(parents=True, exist_ok=True)
            for i in range(min(args.dump_limit, cfg.n_sims)):
                write_dataset(harness.simulate_dataset(cfg, i), out / f"scenario{k}_rep{i}.csv")
    tables = harness.summarize(reports)
    Path(args.out).write_text(harness.reports_to_json(reports, tables))
    text = harness.format_tables(tables)
    if args.tables:
        Path(args.tables).write_text(text + "\n")
    print(text)
    if trace is not None:
        with open(args.trace, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["scenario", "replicate", "model", "procedure", "estimate",
                                    "se", "stat_ni", "reject_ni", "reject_eq"],
                               lineterminator="\n")
            w.writeheader()
            w.writerows(trace)
    return EXIT_OK


def _required_columns(outcome):
    return ("arm", "y") if outcome in ("normal", "binary") else ("arm", "time", "event")


def _null(args, data):
    if args.method == "permutation":
        return empirical_null_permutation(data, args.model, args.outcome, args.B, args.seed,
                                          tau=args.tau)
    return empirical_null_rerandomization(data, args.model, args.outcome, args.scheme, args.B,
                                          args.seed, q=args.q, block_size=args.block_size,
                                          tau=args.tau)


def _dump_null(dist, path):
    n = len(dist.stats)
    normal = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "stat", "normal_quantile"])
        for i, (s, z) in enumerate(zip(dist.stats, normal), start=1):
            w.writerow([i, repr(float(s)), repr(float(z))])


def cmd_analyze(args) -> int:
    data = read_dataset(args.data, require=_required_columns(args.outcome))
    fit = fit_model(data, args.model, args.outcome, tau=args.tau)
    if not fit.converged:
        print(f"error: {args.model} fit did not converge", file=sys.stderr)
        return EXIT_ABORT
    dist = None if args.method == "asymptotic" else _null(args, data)
    a = args.alpha
    t = wald_stat(fit, -args.margin_ni).value
    if dist is None:
        lo, hi = wald_ci(fit, 2 * a)
    else:
        ci = adjusted_ci(fit, dist, 2 * a)
        lo, hi = ci.lower, ci.upper
    ni = test_noninferiority(fit, -args.margin_ni, a, dist)
    eq = test_equivalence(fit, args.margin_eq_lower or args.margin_ni,
                          args.margin_eq_upper or args.margin_ni, a, dist)
    print(f"model            {args.model} ({fit.model_kind})")
    print(f"method           {args.method}")
    print(f"beta1            {fit.estimate:.6g}")
    print(f"se               {fit.stderr:.6g}")
    print(f"T(-margin)       {t:.6g}")
    ci_label = f"{100 * (1 - 2 * a):g}% CI"
    print(f"{ci_label:<17}[{lo:.6g}, {hi:.6g}]")
    print(f"non-inferiority  {'reject' if ni else 'fail'}")
    print(f"equivalence      {'reject' if eq else 'fail'}")
    if dist is not None and args.dump_null:
        _dump_null(dist, args.dump_null)
    return EXIT_OK


def cmd_export_null(args) -> int:
    data = read_dataset(args.data, require=_required_columns(args.outcome))
    dist = _null(args, data)
    _dump_null(dist, args.out)
    print(f"wrote {len(dist.stats)} statistics ({dist.n_failed} failed fits) to {args.out}")
    return EXIT_OK


def cmd_randomize(args) -> int:
    data = read_dataset(args.data)
    arms = randomize_sequence(args.scheme, data.subjects(), args.seed, q=args.q,
                              block_size=args.block_size)
    out = data.with_columns(arm=np.array(arms, dtype=np.int64))
    if args.out:
        write_dataset(out, args.out)
    else:
        sys.stdout.write(write_dataset(out))
    return EXIT_OK


def cmd_pseudo_true(args) -> int:
    value = pseudo_true_rmst_coef(args.A, args.tau, args.n, args.seed,
                                  censor_prob=args.censor_prob)
    print(f"{value:.6g}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scheme(value):
    try:
        return normalize_scheme(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_null_args(p):
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--outcome", choices=ANALYSES, default="normal")
    p.add_argument("--model", choices=MODEL_SPECS, default="naive")
    p.add_argument("--scheme", type=_scheme, default="ps",
                   help=f"allocation scheme used in the trial: {', '.join(SCHEMES)}")
    p.add_argument("--q", type=float, default=0.7)
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=80.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="carinfer",
        description="Covariate-adaptive randomization and randomization-based "
                    "non-inferiority/equivalence inference.",
        epilog="Exit codes: 0 success, 1 runtime abort, 2 usage or configuration error.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run simulation scenarios from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", default="report.json")
    p.add_argument("--tables", help="also write the text tables here")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")
    p.add_argument("--trace", help="per-replicate CSV trace")
    p.add_argument("--dump-data", help="directory for generated datasets")
    p.add_argument("--dump-limit", type=int, default=10,
                   help="datasets dumped per scenario (default 10)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="fit one dataset and test NI/EQ")
    _add_null_args(p)
    p.add_argument("--method", choices=harness.PROCEDURES, default="asymptotic")
    p.add_argument("--margin-ni", type=float, required=True)
    p.add_argument("--margin-eq-lower", type=float)
    p.add_argument("--margin-eq-upper", type=float)
    p.add_argument("--alpha", type=float, default=0.025, help="one-sided level")
    p.add_argument("--dump-null", help="write the sorted null statistics here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export-null", help="write a resampled null distribution as CSV")
    _add_null_args(p)
    p.add_argument("--method", choices=("permutation", "rerandomization"), default="permutation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_null)

    p = sub.add_parser("randomize", help="assign arms to subjects from a CSV")
    p.add_argument("data")
    p.add_argument("--scheme", type=_scheme, default="ps")
    p.add_argument("--q", type=float, default=0.7)
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_randomize)

    p = sub.add_parser("pseudo-true", help="large-sample RMST treatment coefficient")
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--tau", type=float, default=80.0)
    p.add_argument("--n", type=int, default=1_000_000, help="subjects per arm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--censor-prob", type=float, default=0.0)
    p.set_defaults(func=cmd_pseudo_true)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, DatasetFormatError, DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResamplingError, SingularDesignError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
