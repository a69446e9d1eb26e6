"""Batch experiment runner: ``zerobias {expand,verify,concentration,order-fit}``.

A run is fully described by a JSON config (flags override its fields) and
writes three artifacts into the output directory: a CSV table, a JSON report
embedding the config and seed, and a plain-text table on stdout.

Exit codes: 0 success, 1 a verification check failed, 2 bad config or
arguments, 3 a numerical or precondition error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import admissible, checks, distributions
from .errors import DegenerateFitError, ZeroBiasError
from .expansion import BACKENDS, error_budget, expand
from .oracle import DEFAULT_GRID, exact_expectation, fit_power_law, iid_family, mc_expectation, order_fit, task_seed

SCHEMA_VERSION = 1
SUBCOMMANDS = ("expand", "verify", "concentration", "order-fit")
FUNCTIONS = ("call", "indicator", "polynomial", "cosine", "exp")
FAMILIES = ("two-point", "uniform-symmetric", "finite-discrete")
ORACLES = ("exact", "monte-carlo")
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration, with the offending field or source position."""


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run."""

    subcommand: str = "expand"
    family: dict = field(default_factory=lambda: {"kind": "two-point", "p": 0.2})
    function: dict = field(default_factory=lambda: {"name": "call", "k": 0.1})
    order: int = 1
    alpha: float | None = None
    n_grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    oracle: str = "exact"
    mc_count: int = 200_000
    seed: int = 0
    backend: str = "auto"
    budget: bool = True
    budget_grid: int = 801
    checks: list | None = None
    inject_fault: float = 0.0
    concentration_alphas: list = field(default_factory=lambda: [0.5, 1.0])
    concentration_grid: int = 20
    out: str = "zerobias-out"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(f"field {key!r}: unknown field (known: {sorted(names)})")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        def need(cond, fld, msg):
            if not cond:
                raise ConfigError(f"field {fld!r}: {msg}")

        need(self.subcommand in SUBCOMMANDS, "subcommand", f"must be one of {SUBCOMMANDS}")
        need(isinstance(self.family, dict) and self.family.get("kind") in FAMILIES, "family",
             f"needs a 'kind' in {FAMILIES}")
        need(isinstance(self.function, dict) and self.function.get("name") in FUNCTIONS, "function",
             f"needs a 'name' in {FUNCTIONS}")
        need(isinstance(self.order, int) and self.order >= 0, "order", "must be a nonnegative integer")
        need(self.alpha is None or (isinstance(self.alpha, (int, float)) and 0 < self.alpha <= 1), "alpha",
             "must lie in (0, 1]")
        need(isinstance(self.n_grid, list) and len(self.n_grid) >= 1
             and all(isinstance(n, int) and n >= 1 for n in self.n_grid), "n_grid", "must be a list of positive integers")
        need(all(b > a for a, b in zip(self.n_grid, self.n_grid[1:])), "n_grid", "must be strictly increasing")
        need(self.oracle in ORACLES, "oracle", f"must be one of {ORACLES}")
        need(isinstance(self.mc_count, int) and self.mc_count >= 1000, "mc_count", "must be an integer >= 1000")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        need(self.backend in BACKENDS, "backend", f"must be one of {BACKENDS}")
        need(isinstance(self.budget, bool), "budget", "must be true or false")
        need(self.checks is None or all(c in checks.SUITES for c in self.checks), "checks",
             f"entries must be in {checks.SUITES}")
        need(isinstance(self.inject_fault, (int, float)), "inject_fault", "must be a number")
        need(all(0 < a <= 1 for a in self.concentration_alphas), "concentration_alphas", "entries must lie in (0, 1]")
        need(isinstance(self.concentration_grid, int) and self.concentration_grid >= 2, "concentration_grid",
             "must be an integer >= 2")


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# catalog lookup
# ---------------------------------------------------------------------------


def build_family(spec):
    """Base law Z of the iid family Z / sqrt(n)."""
    spec = dict(spec)
    kind = spec.pop("kind")
    moment_order = spec.pop("moment_order", None)
    try:
        if kind == "two-point":
            dist = distributions.make_two_point(float(spec.pop("p")))
        elif kind == "uniform-symmetric":
            dist = distributions.uniform_symmetric(float(spec.pop("half_width", 1.0)))
        else:
            dist = distributions.finite_discrete(spec.pop("values"), spec.pop("weights"))
    except KeyError as exc:
        raise ConfigError(f"field 'family': missing key {exc.args[0]!r} for kind {kind!r}") from exc
    if spec:
        raise ConfigError(f"field 'family': unknown keys {sorted(spec)}")
    if moment_order is not None:
        dist = dataclasses.replace(dist, moment_order=float(moment_order))
    return dist


def build_function(spec):
    spec = dict(spec)
    name = spec.pop("name")
    try:
        if name == "call":
            h = admissible.call_function(float(spec.pop("k", 0.0)))
        elif name == "indicator":
            h = admissible.indicator(float(spec.pop("k", 0.0)))
        elif name == "polynomial":
            h = admissible.polynomial(spec.pop("coeffs"), order=spec.pop("order", None), p=spec.pop("p", None))
        elif name == "cosine":
            h = admissible.cosine(order=int(spec.pop("order", 3)))
        else:
            h = admissible.exp_bounded(order=int(spec.pop("order", 3)))
    except KeyError as exc:
        raise ConfigError(f"field 'function': missing key {exc.args[0]!r} for {name!r}") from exc
    if spec:
        raise ConfigError(f"field 'function': unknown keys {sorted(spec)}")
    return h


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _write_report(path, cfg, payload):
    report = {"schema_version": SCHEMA_VERSION, "subcommand": cfg.subcommand, "seed": cfg.seed,
              "config": cfg.to_dict(), **payload}
    Path(path).write_text(json.dumps(report, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _print_table(header, rows, stream):
    cells = [[str(h) for h in header]] + [[_short(v) for v in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)), file=stream)


def _short(v):
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _oracle(cfg, h, summands, n, name):
    if cfg.oracle == "exact":
        return exact_expectation(h, summands)
    return mc_expectation(h, summands, cfg.mc_count, task_seed(cfg.seed, name, n))


def run_expand(cfg, out, stream):
    base = build_family(cfg.family)
    h = build_function(cfg.function)
    n_order = cfg.order
    header = ["n"] + [f"C_{k}" for k in range(n_order + 1)] + ["oracle", "oracle_se"]
    header += [f"error_{k}" for k in range(n_order + 1)] + ["budget"]
    rows, results = [], []
    for n in cfg.n_grid:
        summands = iid_family(base, n)
        ledger = expand(h, summands, n_order, backend=cfg.backend, fault=cfg.inject_fault)
        truth = _oracle(cfg, h, summands, n, "expand")
        errs = [abs(truth.value - c) for c in ledger.values]
        budget = error_budget(h, summands, n_order, alpha=cfg.alpha, grid_size=cfg.budget_grid) if cfg.budget else None
        total = budget.total if budget else math.nan
        rows.append([n, *ledger.values, truth.value, truth.stderr, *errs, total])
        results.append({"n": n, "ledger": ledger.as_dict(), "oracle": truth.as_dict(),
                        "budget": budget.as_dict() if budget else None})
    _write_csv(out / "expand.csv", header, rows)
    _write_report(out / "expand.json", cfg, {"results": results})
    if stream:
        _print_table(header, rows, stream)
    return EXIT_OK


def run_verify(cfg, out, stream):
    results = checks.run_checks(cfg.checks, fault=cfg.inject_fault)
    header = ["suite", "check", "passed", "value", "tolerance"]
    rows = [[r.suite, r.name, int(r.passed), r.value, r.tolerance] for r in results]
    _write_csv(out / "verify.csv", header, rows)
    failed = [r for r in results if not r.passed]
    _write_report(out / "verify.json", cfg, {"checks": [r.as_dict() for r in results], "failed": len(failed)})
    if stream:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<15} {r.name}  ({r.value:.3g} vs {r.tolerance:.3g})",
                  file=stream)
        print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=stream)
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def run_concentration(cfg, out, stream):
    base = build_family(cfg.family)
    header = ["n", "alpha", "kind", "a", "b", "exact", "bound", "violation"]
    rows, summary = [], []
    for alpha in cfg.concentration_alphas:
        for n in cfg.n_grid:
            cells = checks.concentration_rows(base, n, alpha, cfg.concentration_grid)
            rows.extend([c["n"], c["alpha"], c["kind"], c["a"], c["b"], c["exact"], c["bound"], c["violation"]]
                        for c in cells)
            for kind in ("W", "W^(i)"):
                sub = [c for c in cells if c["kind"] == kind]
                summary.append([n, float(alpha), kind, len(sub), sum(c["violation"] for c in sub)])
    _write_csv(out / "concentration.csv", header, rows)
    sheader = ["n", "alpha", "kind", "cells", "violations"]
    _write_csv(out / "concentration_summary.csv", sheader, summary)
    _write_report(out / "concentration.json", cfg, {"summary": [dict(zip(sheader, s)) for s in summary],
                                                    "violations": sum(s[-1] for s in summary)})
    if stream:
        _print_table(sheader, summary, stream)
    return EXIT_OK


def _fit_row(label, ns, errors, order):
    try:
        fit = fit_power_law(ns, errors)
        lo, hi = fit.confidence_interval()
        return [label, order, fit.slope, fit.intercept, fit.slope_stderr, lo, hi, 0], fit.as_dict()
    except DegenerateFitError as exc:
        nan = math.nan
        return [label, order, nan, nan, nan, nan, nan, 1], {"degenerate": str(exc)}


def run_order_fit(cfg, out, stream):
    base = build_family(cfg.family)
    h = build_function(cfg.function)
    n_order = cfg.order
    fit = order_fit(base, h, n_order, cfg.n_grid, oracle=cfg.oracle, count=cfg.mc_count, seed=cfg.seed,
                    backend=cfg.backend)
    header = ["n"] + [f"C_{k}" for k in range(n_order + 1)] + ["oracle", "oracle_se"]
    header += [f"error_{k}" for k in range(n_order + 1)]
    rows = [[r["n"], *r["C"], r["oracle"], r["oracle_se"], *r["errors"]] for r in fit.rows]
    _write_csv(out / "order_fit.csv", header, rows)
    lo, hi = fit.confidence_interval()
    summary = [["error", n_order, fit.slope, fit.intercept, fit.slope_stderr, lo, hi, 0]]
    fits = {"error": fit.as_dict()}
    if n_order >= 1:
        corr = [abs(r["C"][-1] - r["C"][-2]) for r in fit.rows]
        row, detail = _fit_row("correction", cfg.n_grid, corr, n_order)
        summary.append(row)
        fits["correction"] = detail
    sheader = ["quantity", "order", "slope", "intercept", "slope_stderr", "ci_low", "ci_high", "degenerate"]
    _write_csv(out / "order_fit_summary.csv", sheader, summary)
    _write_report(out / "order_fit.json", cfg, {"rows": fit.rows, "fits": fits})
    if stream:
        _print_table(header, rows, stream)
        _print_table(sheader, summary, stream)
    return EXIT_OK


RUNNERS = {
    "expand": run_expand,
    "verify": run_verify,
    "concentration": run_concentration,
    "order-fit": run_order_fit,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _grid(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad n-grid {text!r}: expected comma-separated integers") from exc


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="zerobias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=_seed)
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--n-grid", type=_grid, dest="n_grid", help="comma-separated n values")
        p.add_argument("--order", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--quiet", action="store_true", help="suppress the stdout table")
        if name == "verify":
            p.add_argument("--check", action="append", choices=checks.SUITES, dest="checks",
                           help="restrict to a suite (repeatable)")
            p.add_argument("--inject-fault", nargs="?", const=1e-3, type=float, dest="inject_fault",
                           help="perturb f_h by a constant (default 1e-3) as a negative control")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    data = cfg.to_dict()
    data["subcommand"] = args.subcommand
    for key in ("seed", "n_grid", "order", "alpha", "checks", "inject_fault"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.out is not None:
        data["out"] = str(args.out)
    return ExperimentConfig.from_dict(data)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[cfg.subcommand](cfg, out, None if args.quiet else sys.stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ZeroBiasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
