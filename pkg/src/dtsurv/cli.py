"""Command-line interface: simulate, inspect, fit, predict, benchmark.

Exit codes: 0 success, 2 configuration error, 3 data or estimability
error, 4 convergence error. Failures print one JSON object on stderr
followed by a plain-text message; files written by a failed command are
removed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import expansion, twostage
from .data import Schema, clip_tail, event_table, load_csv, merge_times, parse_merge, write_csv
from .errors import (
    AdmissibilityError, ConvergenceError, DataLoadError, EstimabilityError, RootError, SeparationError,
)
from .model import predict_curves
from .optim import PenaltySpec
from .results import FittedModel, write_table
from .simulation import CensoringSpec, CoefficientSpec, generate, spec_from_json, spec_to_json, weekend_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4
PRESETS = {
    # name: (default n, default seed)
    "paper": (50_000, 0),
    "sparse-tail": (1_000, 7),
    "weekend": (1_000, 7),
}
FITTERS = {"expansion": expansion.fit, "two-stage": twostage.fit}


class ConfigError(Exception):
    pass


class _Outputs:
    """Stages every output in a temp file; commit renames, rollback deletes."""

    def __init__(self):
        self.pending: dict[Path, Path] = {}

    def path(self, target) -> Path:
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        os.close(fd)
        self.pending[target] = Path(tmp)
        return Path(tmp)

    def commit(self):
        umask = os.umask(0)
        os.umask(umask)
        for target, tmp in self.pending.items():
            os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
            os.replace(tmp, target)

    def rollback(self):
        for tmp in self.pending.values():
            tmp.unlink(missing_ok=True)


def _write_text(out: _Outputs, target, text):
    out.path(target).write_text(text)


def _schema(args) -> Schema:
    try:
        return Schema.parse(args.schema) if args.schema else Schema()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _penalty(args) -> PenaltySpec | None:
    if args.penalizer is None:
        return None
    try:
        values = [float(v) for v in args.penalizer.split(",")]
        pen = values[0] if len(values) == 1 else tuple(values)
        return PenaltySpec(pen, args.l1_ratio)
    except ValueError as exc:
        raise ConfigError(f"bad penalty: {exc}") from exc


def _regroup(ds, args):
    if getattr(args, "clip_upper", None) is not None:
        try:
            ds = clip_tail(ds, args.clip_upper)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "merge", None):
        try:
            ds = merge_times(ds, parse_merge(args.merge))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return ds


def _stem(path) -> str:
    path = str(path)
    for ext in (".csv", ".json"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


def cmd_simulate(args, out: _Outputs):
    if args.n is not None and args.n < 1:
        raise ConfigError("--n must be >= 1")
    if args.spec:
        try:
            spec, censoring, rule, seed = spec_from_json(Path(args.spec).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad spec file: {exc}") from exc
        seed = args.seed if args.seed is not None else seed
        n = args.n if args.n is not None else 1000
        ds = generate(n, spec, censoring, rule, seed=seed)
    else:
        n_default, seed_default = PRESETS[args.preset]
        n = args.n if args.n is not None else n_default
        seed = args.seed if args.seed is not None else seed_default
        spec, censoring, rule = CoefficientSpec.paper(args.d), CensoringSpec(), "uniform"
        if args.preset == "weekend":
            ds = weekend_scenario(n, seed=seed, spec=spec)
        else:
            ds = generate(n, spec, censoring, rule, seed=seed)
    write_csv(ds, out.path(args.output), _schema(args))
    spec_path = args.spec_output or _stem(args.output) + ".spec.json"
    _write_text(out, spec_path, spec_to_json(spec, censoring, rule, seed) + "\n")


def cmd_inspect(args, out: _Outputs):
    ds = _regroup(load_csv(args.input, _schema(args)), args)
    event_table(ds).to_frame().to_csv(out.path(args.output), index=False)


def run_fit(ds, method, penalty=None, min_events=1, ties="efron", n_jobs=1) -> FittedModel:
    if method == "two-stage":
        return twostage.fit(ds, penalty, min_events=min_events, ties=ties, n_jobs=n_jobs)
    return expansion.fit(ds, penalty, min_events=min_events, n_jobs=n_jobs)


def cmd_fit(args, out: _Outputs):
    penalty = _penalty(args)
    if args.min_events < 1:
        raise ConfigError("--min-events must be >= 1")
    ds = _regroup(load_csv(args.input, _schema(args)), args)
    if penalty is not None:
        try:
            penalty.weights(ds.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    start = time.perf_counter()
    fitted = run_fit(ds, args.method, penalty, args.min_events, args.ties, args.jobs)
    seconds = time.perf_counter() - start
    stem = _stem(args.output)
    table = fitted.summary()
    write_table(table, out.path(stem + ".csv"), out.path(stem + ".json"))
    _write_text(out, stem + ".model.json", fitted.to_json() + "\n")
    report = {
        "method": fitted.method,
        "n": ds.n,
        "d": ds.d,
        "M": ds.M,
        "p": ds.p,
        "labels": list(ds.grid.labels),
        "iterations": fitted.iterations,
        "converged": fitted.converged,
        "loglik": fitted.loglik,
        "penalty": fitted.penalty,
        "ties": args.ties if args.method == "two-stage" else None,
        "seconds": seconds,
    }
    _write_text(out, stem + ".report.json", json.dumps(report, indent=2) + "\n")


def cmd_predict(args, out: _Outputs):
    try:
        fitted = FittedModel.from_json(Path(args.model).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read model {args.model}: {exc}") from exc
    try:
        frame = pd.read_csv(args.input, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataLoadError(f"cannot read {args.input}: {exc}") from exc
    missing = [c for c in fitted.covariate_names if c not in frame.columns]
    if missing:
        raise DataLoadError(f"covariate columns {missing} missing from {args.input}")
    Z = frame[list(fitted.covariate_names)].apply(pd.to_numeric, errors="coerce")
    if Z.isna().any().any():
        row = int(np.flatnonzero(Z.isna().any(axis=1).to_numpy())[0])
        raise DataLoadError("unparseable covariate value", row=row + 2)
    pred = predict_curves(fitted, Z.to_numpy(dtype=float))
    ids = frame[args.id_column].to_numpy() if args.id_column in frame.columns else np.arange(len(frame))
    pred.insert(0, "id", ids[pred.pop("obs").to_numpy()])
    pred.to_csv(out.path(args.output), index=False, float_format="%.17g")


def benchmark(d_grid, reps, n, seed=0, methods=("expansion", "two-stage"), log=None) -> pd.DataFrame:
    """Time both fitters on fresh simulated data for every ``d`` and repetition."""
    rows = []
    for d in d_grid:
        spec = CoefficientSpec.paper(d)
        for rep in range(reps):
            ds = generate(n, spec, seed=seed + 1000 * d + rep)
            for method in methods:
                status = "ok"
                start = time.perf_counter()
                try:
                    run_fit(ds, method)
                except Exception as exc:  # recorded per cell, the run continues
                    status = f"{type(exc).__name__}: {exc}"
                seconds = time.perf_counter() - start
                rows.append({"method": method, "d": d, "repetition": rep,
                             "seconds": seconds if status == "ok" else np.nan, "status": status})
                if log:
                    log(f"d={d} rep={rep} {method}: {seconds:.3f}s {status}")
    return pd.DataFrame(rows)


def benchmark_summary(timings: pd.DataFrame) -> pd.DataFrame:
    med = timings.pivot_table(index="d", columns="method", values="seconds", aggfunc="median")
    med = med.rename(columns=lambda m: f"median_{m.replace('-', '_')}")
    med["ratio"] = med["median_expansion"] / med["median_two_stage"]
    return med.reset_index()


def cmd_benchmark(args, out: _Outputs):
    try:
        grid = [int(v) for v in args.d_grid.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --d-grid: {exc}") from exc
    if not grid or args.reps < 1 or args.n < 1:
        raise ConfigError("benchmark needs a non-empty --d-grid, --reps >= 1 and --n >= 1")
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    timings = benchmark(grid, args.reps, args.n, seed=args.seed or 0, log=log)
    timings.to_csv(out.path(args.output), index=False)
    benchmark_summary(timings).to_csv(out.path(_stem(args.output) + ".summary.csv"), index=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtsurv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--schema", help="column mapping, e.g. id=pid,time=X,event=J")
        p.add_argument("--seed", type=int)

    def regroup(p):
        p.add_argument("--clip-upper", type=int, help="pool times >= this index into one category")
        p.add_argument("--merge", help='fold times into earlier ones, e.g. "7:6,14:13,21:20"')

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p, needs_input=False)
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    p.add_argument("--spec", help="JSON coefficient spec (overrides --preset)")
    p.add_argument("--spec-output", help="where to write the spec JSON")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int, default=30)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", help="event/censoring counts per time point")
    common(p)
    regroup(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("fit", help="fit the model; --output is a path prefix")
    common(p)
    regroup(p)
    p.add_argument("--method", choices=sorted(FITTERS), default="two-stage")
    p.add_argument("--penalizer", help="scalar or comma-separated per-covariate weights")
    p.add_argument("--l1-ratio", type=float, default=0.0)
    p.add_argument("--min-events", type=int, default=1)
    p.add_argument("--ties", choices=twostage.TIES, default="efron")
    p.add_argument("--jobs", type=int, default=1, help="fit event types in parallel")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="hazard, probability, CIF and survival curves")
    common(p)
    p.add_argument("--model", required=True, help="model JSON written by fit")
    p.add_argument("--id-column", default="pid")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="time both fitters over a grid of d")
    common(p, needs_input=False)
    p.add_argument("--d-grid", default="15,30")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    return parser


def _fail(code, exc, **extra):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    print(json.dumps(payload), file=sys.stderr)
    print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _Outputs()
    try:
        args.func(args, out)
    except ConfigError as exc:
        out.rollback()
        return _fail(EXIT_CONFIG, exc)
    except EstimabilityError as exc:
        out.rollback()
        return _fail(EXIT_DATA, exc, cells=[list(c) for c in exc.cells])
    except (DataLoadError, SeparationError, AdmissibilityError, RootError) as exc:
        out.rollback()
        return _fail(EXIT_DATA, exc)
    except ConvergenceError as exc:
        out.rollback()
        return _fail(EXIT_CONVERGENCE, exc)
    except BaseException:
        out.rollback()
        raise
    out.commit()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
