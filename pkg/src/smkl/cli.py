"""Command line entry point: ``smkl train``, ``smkl certify`` and ``smkl cv``.

Every flag can also be set through an environment variable named
``SMKL_`` plus the flag in upper case with dashes as underscores
(``SMKL_MEM_BUDGET_MB=512``); explicit flags win.

Exit codes: 0 on success (including relaxations skipped for memory),
1 on numerical or algorithmic failure, 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import relaxations as relax
from . import report
from .conic import CapacityError, ConicError
from .core import ConfigError, KSparseRandom, SmklConfig, WarmStart
from .data_io import BUNDLED, DataError, bundled_path, load_csv, split_standardize
from .kernels import KernelError, build_bank, load_kernel_specs
from .model_select import CvGrid, SelectionError, cross_validate, evaluate, timed_fit
from .projection import ProjectionError
from .report import UNAVAILABLE
from .smo import SolverError

log = logging.getLogger("smkl")

USAGE_ERRORS = (DataError, ConfigError, SelectionError, KernelError, OSError, json.JSONDecodeError)
NUMERIC_ERRORS = (SolverError, ProjectionError, ConicError, relax.RelaxationError, FloatingPointError,
                  np.linalg.LinAlgError)
DEFAULT_LEVELS = "soc-basis,soc-rand,sdp-3x3,sdp-full"


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return version("smkl")
    except PackageNotFoundError:
        return "unknown"


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="CSV file, or a bundled dataset name (iris, wine)")
    p.add_argument("--schema", help="JSON schema; defaults to the bundled schema for bundled data")
    p.add_argument("--kernels", default="default10", help="kernel bank JSON, or 'default10'")
    p.add_argument("--C", type=float, default=10.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--k0", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--patience", type=int, default=3, help="non-improving sweeps before stopping")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="seed for the split, folds and random init")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--init", choices=["random", "warm"], default="random")
    p.add_argument("--relax", choices=[lv.value for lv in relax.RelaxationLevel], default="sdp-full",
                   help="relaxation used for --init warm")
    p.add_argument("--rand-vectors", type=int, default=relax.DEFAULT_NUM_RANDOM)
    p.add_argument("--out", help="report path (printed to stdout when omitted)")
    p.add_argument("--mem-budget-mb", type=float, default=2048.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--solver-tol", type=float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smkl", description="Sparse multiple kernel learning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    train = sub.add_parser("train", help="fit on the training split and evaluate on the test split")
    _add_common(train)
    cert = sub.add_parser("certify", help="train, then bound the optimum with convex relaxations")
    _add_common(cert)
    cert.add_argument("--levels", default=DEFAULT_LEVELS, help="comma separated relaxation levels")
    cv = sub.add_parser("cv", help="cross-validate (C, lambda, k0), refit and evaluate")
    _add_common(cv)
    cv.add_argument("--grid", default="default", help="'default', 'single' or a JSON file with C/lambda/k0/folds")
    cv.add_argument("--cv-log", help="CSV log with one row per grid point")
    return parser


def apply_env(parser: argparse.ArgumentParser, env=os.environ):
    """Use ``SMKL_*`` variables as defaults for the matching flags."""
    subparsers = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    for sp in subparsers:
        for p in sp.choices.values():
            for action in p._actions:
                if not action.option_strings or action.dest == "help":
                    continue
                flag = max(action.option_strings, key=len).lstrip("-")
                key = "SMKL_" + flag.upper().replace("-", "_")
                if key in env:
                    raw = env[key]
                    try:
                        value = action.type(raw) if action.type else raw
                    except ValueError:
                        raise UsageError(f"{key}={raw!r} is not a valid value for --{flag}") from None
                    if action.choices and value not in action.choices:
                        raise UsageError(f"{key}={raw!r} must be one of {sorted(action.choices)}")
                    p.set_defaults(**{action.dest: value})
                    action.required = False


def _load(args):
    if args.data in BUNDLED and not Path(args.data).exists():
        data, schema = bundled_path(args.data)
        schema = args.schema or schema
    else:
        data = Path(args.data)
        if not data.exists():
            raise UsageError(f"data file not found: {data}")
        if args.schema is None:
            raise UsageError("--schema is required for non-bundled data")
        schema = args.schema
    if not Path(schema).exists():
        raise UsageError(f"schema file not found: {schema}")
    if args.kernels not in ("default", "default10") and not Path(args.kernels).exists():
        raise UsageError(f"kernel config not found: {args.kernels}")
    raw = load_csv(data, schema)
    split = split_standardize(raw, args.seed, args.train_frac)
    specs = load_kernel_specs(args.kernels)
    return raw, split, specs


def _config(args, C, lam, k0, init) -> SmklConfig:
    return SmklConfig(C=C, lam=lam, k0=k0, eps=args.eps, patience=args.patience, max_iter=args.max_iter, init=init)


def _train(args, split, specs, C, lam, k0, timings):
    start = time.perf_counter()
    bank = build_bank(specs, split.train.X)
    timings["kernels"] = time.perf_counter() - start
    init = KSparseRandom(args.seed)
    if args.init == "warm":
        start = time.perf_counter()
        out = relax.solve_relaxation(args.relax, bank, split.train.y, C, lam, k0, args.rand_vectors, args.seed,
                                     tol=args.solver_tol, mem_budget_mb=args.mem_budget_mb)
        init = WarmStart(relax.extract_warm_start(out, k0))
        timings["warm_start"] = time.perf_counter() - start
    config = _config(args, C, lam, k0, init)
    result, elapsed = timed_fit(bank, split.train.y, config)
    timings["fit"] = elapsed
    ev = evaluate(result, specs, split, elapsed, config)
    return bank, config, result, ev


def _fields(args, raw, split, specs, config, result, ev):
    return {
        "command": args.command,
        "version": tool_version(),
        "dataset": raw.name,
        "seed": args.seed,
        "n_train": split.train.n,
        "n_test": split.test.n,
        "q": len(specs),
        "kernels": ",".join(s.name for s in specs),
        "C": config.C,
        "lambda": config.lam,
        "k0": config.k0,
        "eps": config.eps,
        "patience": config.patience,
        "max_iter": config.max_iter,
        "init": args.init if args.init == "random" else f"warm:{args.relax}",
        "beta": result.beta.beta,
        "support": result.beta.support,
        "nnz_beta": ev.nnz_beta,
        "accuracy": ev.accuracy,
        "iterations": result.iterations_run,
        "stop_reason": result.stop_reason.value,
        "objective_first": result.objective_trace[0],
        "objective_last": result.objective_trace[-1],
        "objective_best": result.best_objective,
        "objective_attained": result.upper_bound,
    }


def _timings(t: dict) -> str:
    return ",".join(f"{k}:{v:.6f}" for k, v in t.items())


def cmd_train(args) -> dict:
    timings = {}
    raw, split, specs = _load(args)
    _, config, result, ev = _train(args, split, specs, args.C, args.lam, args.k0, timings)
    fields = _fields(args, raw, split, specs, config, result, ev)
    fields["timings"] = _timings(timings)
    return fields


def cmd_certify(args) -> dict:
    timings = {}
    raw, split, specs = _load(args)
    levels = [relax.RelaxationLevel(s.strip()) for s in args.levels.split(",") if s.strip()]
    bank, config, result, ev = _train(args, split, specs, args.C, args.lam, args.k0, timings)
    upper = result.upper_bound
    bounds, over_upper, over_lower = [], [], []
    best = None
    for level in levels:
        start = time.perf_counter()
        try:
            out = relax.solve_relaxation(level, bank, split.train.y, config.C, config.lam, config.k0,
                                         args.rand_vectors, args.seed, tol=args.solver_tol,
                                         mem_budget_mb=args.mem_budget_mb)
        except CapacityError as e:
            log.warning("%s: %s", level.value, e)
            bounds.append(UNAVAILABLE); over_upper.append(UNAVAILABLE); over_lower.append(UNAVAILABLE)
            continue
        finally:
            timings[level.value] = time.perf_counter() - start
        gap = relax.certify_gap(upper, out.lower_bound)
        bounds.append(report.fmt(out.lower_bound))
        over_upper.append(report.fmt(gap.gap_over_upper))
        over_lower.append(report.fmt(gap.gap_over_lower))
        if best is None or gap.lower > best.lower:
            best = gap
    fields = _fields(args, raw, split, specs, config, result, ev)
    fields.update({
        "levels": ",".join(lv.value for lv in levels),
        "lower_bound": " ".join(bounds),
        "gap_over_upper": " ".join(over_upper),
        "gap_over_lower": " ".join(over_lower),
        "certificate": "globally optimal certificate" if best and best.certified_optimal else "none",
    })
    fields["timings"] = _timings(timings)
    return fields


def _grid(args) -> CvGrid:
    if args.grid == "default":
        return CvGrid()
    if args.grid == "single":
        return CvGrid.single(args.C, args.lam, args.k0)
    path = Path(args.grid)
    if not path.exists():
        raise UsageError(f"grid file not found: {path}")
    d = json.loads(path.read_text())
    return CvGrid(d.get("C", [args.C]), d.get("lambda", [args.lam]), d.get("k0", [args.k0]), d.get("folds", 10))


def cmd_cv(args) -> dict:
    timings = {}
    raw, split, specs = _load(args)
    grid = _grid(args)
    start = time.perf_counter()
    cv = cross_validate(split.train, specs, grid, args.seed, args.cv_log, workers=args.threads)
    timings["cv"] = time.perf_counter() - start
    sel = cv.best
    _, config, result, ev = _train(args, split, specs, sel.C, sel.lam, sel.k0, timings)
    fields = _fields(args, raw, split, specs, config, result, ev)
    chosen = next(s for s in cv.scores if (s.C, s.lam, s.k0) == (sel.C, sel.lam, sel.k0))
    fields.update({"grid_points": len(cv.scores), "folds": grid.folds, "cv_mean_accuracy": chosen.mean})
    fields["timings"] = _timings(timings)
    return fields


COMMANDS = {"train": cmd_train, "certify": cmd_certify, "cv": cmd_cv}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        apply_env(parser)
    except UsageError as e:
        print(f"smkl: error: {e}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        fields = COMMANDS[args.command](args)
        text = report.write(fields, args.out)
    except (UsageError, *USAGE_ERRORS) as e:
        print(f"smkl: error: {e}", file=sys.stderr)
        return 2
    except relax.InconsistentBoundError as e:
        print(f"smkl: inconsistent bounds: {e}", file=sys.stderr)
        return 1
    except (*NUMERIC_ERRORS, CapacityError) as e:
        print(f"smkl: numerical error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.out is None:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
