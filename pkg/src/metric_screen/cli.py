"""Command-line interface: ``metric-screen {screen,simulate,replicate,oracle-check}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 degenerate weights or
pairs, 4 failed oracle checks.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import _pairs
from .errors import DataError, DegeneratePairs, DegenerateWeights
from .experiments import ExperimentPlan, PlanError, run_plan
from .kernels import KernelSpec
from .objective import WeightedDataset
from .rebalance import BoostConfig
from .screening import (MODES, SCREEN_ASCENT, PermutationThreshold, ScreenConfig,
                        TheoryThreshold, rescale_features, screen)
from .simgen import MODELS, generate, model_from_params, model_params
from . import oracles

log = logging.getLogger("metric_screen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE, EXIT_CHECKS = 0, 1, 2, 3, 4
SCHEMA = 1
BUNDLED_PLANS = ("uneq_var", "xor_small")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# CSV input and output
# --------------------------------------------------------------------------

def read_csv(path, label: str = "y") -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Parse a numeric CSV with a header; returns ``(X, y, feature_names)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label not in header:
            raise DataError(f"{path}: label column {label!r} not found in header")
        li = header.index(label)
        names = [h for k, h in enumerate(header) if k != li]
        rows, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
            lab = vals.pop(li)
            if lab not in (0.0, 1.0):
                raise DataError(f"{path}:{line}: label must be 0 or 1, got {row[li]!r}")
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line}: non-finite feature value")
            rows.append(vals)
            labels.append(int(lab))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=float).reshape(len(rows), len(names)), np.array(labels), names


def write_csv(path, X, y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(X.shape[1])] + ["y"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def _dump(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# screen
# --------------------------------------------------------------------------

def parse_gamma(text: str):
    """``permutation:N:Q`` or ``theory:C:T``."""
    parts = text.split(":")
    try:
        if parts[0] == "permutation":
            n_perm = int(parts[1]) if len(parts) > 1 else 200
            quantile = float(parts[2]) if len(parts) > 2 else 0.95
            return PermutationThreshold(n_perm, quantile)
        if parts[0] == "theory":
            coeff = float(parts[1]) if len(parts) > 1 else 1.0
            t = float(parts[2]) if len(parts) > 2 else 0.0
            return TheoryThreshold(coeff, t)
    except (ValueError, IndexError):
        pass
    raise UsageError(f"bad --gamma {text!r}; use permutation:N:Q or theory:C:T")


def _kernel(args) -> KernelSpec:
    if args.kernel == "laplace":
        return KernelSpec.laplace(args.scale)
    if args.kernel == "gaussian":
        return KernelSpec.gaussian(args.scale)
    return KernelSpec.sqrt_shift(q=args.q, epsilon=args.epsilon)


def screen_config(args) -> ScreenConfig:
    ascent = replace(SCREEN_ASCENT, c_alpha=args.c_alpha, max_iters=args.max_iters,
                     step_rule=args.step_rule)
    return ScreenConfig(mode=args.mode, gamma=parse_gamma(args.gamma),
                        lambda_coeff=args.lambda_coeff, t=args.t, budget=args.budget,
                        ascent=ascent, tau=args.tau, max_rounds=args.max_rounds,
                        max_selected=args.max_selected, kernel=_kernel(args),
                        boost=BoostConfig(n_rounds=args.boost_rounds),
                        min_effective_size=args.min_effective_size, seed=args.seed)


def cmd_screen(args) -> int:
    try:
        cfg = screen_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    X, y, names = read_csv(args.input, args.label)
    scales = None
    if not args.no_rescale:
        X, scales = rescale_features(X)
    res = screen(WeightedDataset(X, y), cfg)
    out = {
        "schema": SCHEMA,
        "command": "screen",
        "input": str(args.input),
        "label": args.label,
        "seed": args.seed,
        "rescale": not args.no_rescale,
        "column_scales": None if scales is None else scales.tolist(),
        "config": cfg.to_dict(),
        "columns": names,
        "selected": res.selected,
        "selected_columns": [names[j] for j in res.selected],
        **{k: v for k, v in res.to_dict().items() if k != "selected"},
    }
    _dump(out, args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def _parse_value(text: str):
    if "," in text:
        return [float(v) for v in text.split(",") if v]
    try:
        return int(text)
    except ValueError:
        return float(text)


def cmd_simulate(args) -> int:
    params = {"model": args.model}
    if args.p is not None:
        params["p"] = args.p
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"bad --param {item!r}; use key=value")
        key, value = item.split("=", 1)
        params[key.strip()] = _parse_value(value.strip())
    try:
        model = model_from_params(params)
        model.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"model parameters: {exc}") from None
    X, y = generate(model, args.n, args.seed)
    write_csv(args.output, X, y)
    sidecar = args.params or f"{args.output}.params.json"
    _dump({"schema": SCHEMA, "command": "simulate", "n": args.n, "seed": args.seed,
           "output": str(args.output), "params": model_params(model)}, sidecar)
    return EXIT_OK


# --------------------------------------------------------------------------
# replicate
# --------------------------------------------------------------------------

def load_plan(spec: str) -> dict:
    if spec in BUNDLED_PLANS:
        text = resources.files("metric_screen").joinpath(f"plans/{spec}.json").read_text()
    else:
        try:
            text = Path(spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read plan {spec!r}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"plan is not valid JSON: {exc}") from None


def cmd_replicate(args) -> int:
    d = load_plan(args.plan)
    if args.reps is not None:
        d["reps"] = args.reps
    if args.noise_dims:
        d["noise_dims"] = args.noise_dims
    if args.seed is not None:
        d["seed"] = args.seed
    plan = ExperimentPlan.from_dict(d)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_plan(plan, progress=lambda c: log.info(
        "%s noise_dim=%d rep=%d chosen=%s", c.method, c.noise_dim, c.rep, c.chosen))
    report.write_csv(out / "cells.csv")
    report.write_json(out / "summary.json")
    names = ["method", "noise_dim", "reps", "failed", "all"] + \
        [f"x{j + 1}" for j in plan.signals] + ["mean_seconds", "max_seconds"]
    with open(out / "recovery.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        w.writerows(report.table())
    print(json.dumps({"schema": SCHEMA, "output_dir": str(out),
                      "recovery": report.table()}, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle-check
# --------------------------------------------------------------------------

def cmd_oracle_check(args) -> int:
    sign_error = args.inject_fault == "gradient-sign"
    checks = oracles.run_checks(scale=args.kernel_scale, sign_error=sign_error)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<28} {c.detail}")
    if args.output:
        _dump({"schema": SCHEMA, "command": "oracle-check", "kernel_scale": args.kernel_scale,
               "checks": [vars(c) for c in checks]}, args.output)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECKS


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="metric-screen", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None,
                    help="compiled-loop threads (default: all cores; "
                         "METRIC_SCREEN_THREADS overrides)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("screen", help="select variables from a CSV file")
    s.add_argument("--input", required=True)
    s.add_argument("--label", default="y")
    s.add_argument("--output", default="-", help="JSON report path ('-' for stdout)")
    s.add_argument("--mode", choices=MODES, default="low")
    s.add_argument("--gamma", default="permutation:200:0.95",
                   help="permutation:N:Q or theory:C:T (low mode)")
    s.add_argument("--lambda-coeff", type=float, default=0.0)
    s.add_argument("--t", type=float, default=0.0)
    s.add_argument("--budget", type=float, default=10.0)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--max-rounds", type=int, default=10)
    s.add_argument("--max-selected", type=int, default=None)
    s.add_argument("--kernel", choices=("laplace", "gaussian", "sqrt"), default="laplace")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--epsilon", type=float, default=1e-8)
    s.add_argument("--q", type=int, choices=(1, 2), default=1, help="exponent for --kernel sqrt")
    s.add_argument("--c-alpha", type=float, default=SCREEN_ASCENT.c_alpha)
    s.add_argument("--max-iters", type=int, default=SCREEN_ASCENT.max_iters)
    s.add_argument("--step-rule", choices=("fixed", "backtrack", "adaptive"),
                   default=SCREEN_ASCENT.step_rule)
    s.add_argument("--boost-rounds", type=int, default=BoostConfig().n_rounds)
    s.add_argument("--min-effective-size", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-rescale", action="store_true",
                   help="keep raw feature scales instead of dividing by column max |x|")
    s.set_defaults(func=cmd_screen)

    m = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    m.add_argument("--model", choices=sorted(MODELS), required=True)
    m.add_argument("--p", type=int, default=None)
    m.add_argument("--n", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="model parameter, e.g. rho=0.3 or deltas=0.4,0.3")
    m.add_argument("--output", required=True)
    m.add_argument("--params", default=None, help="sidecar JSON (default OUTPUT.params.json)")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replicate", help="run a recovery experiment plan")
    r.add_argument("--plan", required=True, help=f"JSON path or bundled name {BUNDLED_PLANS}")
    r.add_argument("--output-dir", required=True)
    r.add_argument("--reps", type=int, default=None)
    r.add_argument("--noise-dims", type=int, nargs="+", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_replicate)

    o = sub.add_parser("oracle-check", help="run the built-in correctness checks")
    o.add_argument("--kernel-scale", type=float, default=1.0)
    o.add_argument("--output", default=None)
    o.add_argument("--inject-fault", choices=("gradient-sign",), default=None,
                   help=argparse.SUPPRESS)
    o.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    env = os.environ.get("METRIC_SCREEN_THREADS")
    _pairs.set_threads(int(env) if env else args.threads)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"metric-screen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlanError as exc:
        print(f"metric-screen: plan error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateWeights, DegeneratePairs) as exc:
        print(f"metric-screen: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, OSError) as exc:
        print(f"metric-screen: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
