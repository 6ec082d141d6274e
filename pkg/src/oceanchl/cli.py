"""Command-line driver: one pipeline stage per invocation, composed through files.

Every subcommand prints one ``key=value`` summary line on standard output.
Exit status is 0 on success, 1 on a data or domain error (the error class is
named on standard error) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .baseline import baseline_chl, baseline_grid, load_coeffs
from .core import (BAND_NAMES, CHL_BAND, GeoGrid, GridStack, SampleTable, TrainTestSplit,
                   flatten_grid_stack, split_train_test)
from .errors import ArgumentError, ChlError, SchemaError
from .estimators import (DEFAULT_HYPERPARAMS, DEFAULT_SEED, ENSEMBLE_KINDS, KINDS, EstimatorSpec,
                         compute_oob_mae, default_specs, fit, predict_grid)
from .evaluation import (composite_average, compare_models, default_grid, kde_density,
                         relative_error_grid, render_map, silverman_bandwidth)
from .formats import (GRID_MAGIC, TABLE_HEADER, load_grid, load_model_file,
                      load_table, save_grid, save_model_file, save_table, write_table)
from .synthetic import run_synthetic_benchmark

# flag dest -> hyperparameter name
HP_FLAGS = {
    "lam": "lambda", "n_estimators": "n_estimators", "max_features": "max_features",
    "max_depth": "max_depth", "min_samples_split": "min_samples_split", "bootstrap": "bootstrap",
    "c": "C", "epsilon": "epsilon", "gamma": "gamma", "tol": "tol", "max_iter": "max_iter",
    "k": "k", "aggregation": "aggregation",
}


class UsageError(Exception):
    pass


def _summary(**items) -> None:
    parts = []
    for key, v in items.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        parts.append(f"{key}={shlex.quote(str(v))}")
    print(" ".join(parts))


def _is_grid_file(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(GRID_MAGIC)) == GRID_MAGIC


def _single_plane(grid: GeoGrid, name: str = CHL_BAND) -> GridStack:
    if name == CHL_BAND:
        return GridStack({}, grid)
    return GridStack({name: grid})


def _plane(stack: GridStack, name: Optional[str]) -> GeoGrid:
    """The named plane, or chl, or the only plane of a stack."""
    if name is None:
        if stack.chl is not None:
            return stack.chl
        if len(stack.bands) == 1:
            return next(iter(stack.bands.values()))
        raise SchemaError("grid has several planes and no chl plane; choose one with --band")
    if name == CHL_BAND:
        if stack.chl is None:
            raise SchemaError("grid has no chl plane")
        return stack.chl
    if name not in stack.bands:
        raise SchemaError(f"grid has no plane {name!r}")
    return stack.bands[name]


# ---------------------------------------------------------------------------
# argument types


def _max_depth(text: str):
    if text.lower() in ("none", "inf", "unlimited"):
        return None
    return int(text)


def _gamma(text: str):
    return text if text == "scale" else float(text)


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must lie in [0, 1], got {text}")
    return v


def _bounds(text: str) -> tuple[float, float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bounds are NORTH,SOUTH,WEST,EAST")
    return tuple(parts)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> None:
    if _is_grid_file(args.input):
        stack = load_grid(args.input)
        if args.all_pixels:
            # every pixel, row-major, fill kept, so table-to-grid inverts it
            stack.require_bands()
            X = stack.feature_planes().reshape(-1, len(BAND_NAMES))
            y = None
            if stack.chl is not None:
                c = stack.chl.values.reshape(-1)
                y = np.where(stack.chl.valid_mask().reshape(-1), c, np.nan)
            table = SampleTable.from_arrays(X, y)
        else:
            table = flatten_grid_stack(stack)
        save_table(args.out, table)
        _summary(direction="grid-to-table", n_rows=len(table), out=args.out)
        return
    if args.n_rows is None or args.n_cols is None or args.bounds is None:
        raise UsageError("table-to-grid ingestion needs --n-rows, --n-cols and --bounds")
    table = load_table(args.input)
    n_pix = args.n_rows * args.n_cols
    if len(table) != n_pix:
        raise SchemaError(f"table has {len(table)} rows, grid needs {n_pix} (row-major)")
    shape = (args.n_rows, args.n_cols)
    fill = args.fill_value
    bands = {b: GeoGrid(table.rrs[:, i].reshape(shape), *args.bounds, fill_value=fill)
             for i, b in enumerate(BAND_NAMES)}
    chl = None
    if table.has_chl.any():
        chl = GeoGrid(np.where(table.has_chl, table.chl, fill).reshape(shape), *args.bounds,
                      fill_value=fill)
    save_grid(args.out, GridStack(bands, chl, args.time_start, args.time_end))
    _summary(direction="table-to-grid", n_rows=args.n_rows, n_cols=args.n_cols, out=args.out)


def cmd_split(args) -> None:
    table = load_table(args.input)
    split = split_train_test(table, args.train_frac, args.test_frac, args.seed)
    stem = Path(args.input).with_suffix("")
    out_train = args.out_train or f"{stem}.train.csv"
    out_test = args.out_test or f"{stem}.test.csv"
    save_table(out_train, split.train)
    save_table(out_test, split.test)
    _summary(n_train=len(split.train), n_test=len(split.test), seed=args.seed,
             train=out_train, test=out_test)


def _inline_hyperparams(args, kind: str) -> dict:
    hp = {}
    for dest, name in HP_FLAGS.items():
        if not hasattr(args, dest):
            continue
        v = getattr(args, dest)
        if name not in DEFAULT_HYPERPARAMS[kind]:
            raise UsageError(f"--{dest.replace('_', '-')} does not apply to {kind}")
        hp[name] = v
    return hp


def _spec_from_doc(doc, seed: int) -> tuple[str, EstimatorSpec]:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SchemaError("each spec must be an object with a 'kind'")
    hp = doc.get("hyperparams", {})
    if not isinstance(hp, dict):
        raise SchemaError("hyperparams must be an object")
    spec = EstimatorSpec(doc["kind"], hp, doc.get("seed", seed), bool(doc.get("log_target", False)))
    return str(doc.get("name", spec.kind)), spec


def _load_spec_file(path: str, seed: int) -> list[tuple[str, EstimatorSpec]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"spec file is not JSON: {exc}") from exc
    docs = doc if isinstance(doc, list) else [doc]
    if not docs:
        raise SchemaError("spec file lists no estimators")
    return [_spec_from_doc(d, seed) for d in docs]


def cmd_train(args) -> None:
    train = load_table(args.input)
    if args.spec_file:
        specs = _load_spec_file(args.spec_file, args.seed)
        if len(specs) != 1:
            raise SchemaError("train takes exactly one spec")
        spec = specs[0][1]
    else:
        if args.model is None:
            raise UsageError("train needs --model or --spec-file")
        spec = EstimatorSpec(args.model, _inline_hyperparams(args, args.model), args.seed,
                             args.log_target)
    extra = {}
    if args.search_max_features:
        if spec.kind not in ENSEMBLE_KINDS or not spec.hp("bootstrap"):
            raise ArgumentError("the max_features search needs a bootstrapped ensemble")
        best = None
        for m in range(1, len(BAND_NAMES) + 1):
            trial = EstimatorSpec(spec.kind, {**spec.hyperparams, "max_features": m}, spec.seed,
                                  spec.log_target)
            model = fit(trial, train, n_jobs=args.n_jobs)
            oob = compute_oob_mae(model, train)
            if oob.mae is not None and (best is None or oob.mae < best[0]):
                best = (oob.mae, m, model)
        if best is None:
            raise ArgumentError("no row received an out-of-bag prediction")
        extra["oob_mae"], extra["max_features"], model = best
    else:
        model = fit(spec, train, n_jobs=args.n_jobs)
        if args.oob:
            oob = compute_oob_mae(model, train)
            extra["oob_mae"] = "nan" if oob.mae is None else oob.mae
            extra["oob_covered"] = oob.n_covered
    save_model_file(args.out, model)
    _summary(model=model.kind, n_train=len(train), seed=model.spec.seed, **extra, out=args.out)


def cmd_compare(args) -> None:
    train = load_table(args.train)
    test = load_table(args.test)
    if args.spec_file:
        named = _load_spec_file(args.spec_file, args.seed)
    else:
        named = [(s.kind, s) for s in default_specs(args.seed)]
    split = TrainTestSplit(train, test, args.seed, math.nan, math.nan)
    preds = {} if args.predictions else None
    report = compare_models([s for _, s in named], split, [n for n, _ in named],
                            n_jobs=args.n_jobs, predictions=preds)
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    if args.text:
        Path(args.text).write_text(report.to_text(), encoding="utf-8")
    else:
        sys.stderr.write(report.to_text())
    if preds is not None:
        names = list(preds)
        lines = [",".join(["chl_a"] + names)]
        for i, t in enumerate(test.chl.tolist()):
            lines.append(",".join([repr(t)] + [repr(float(preds[n][i])) for n in names]))
        Path(args.predictions).write_text("\n".join(lines) + "\n", encoding="utf-8")
    items = {"n_train": len(train), "n_test": len(test)}
    for r in report.rows:
        items[f"{r.name}_mae"] = r.mae
        items[f"{r.name}_acc"] = r.accuracy
    if args.out:
        items["out"] = args.out
    _summary(**items)


def cmd_predict_grid(args) -> None:
    model = load_model_file(args.model)
    stack = load_grid(args.input)
    grid = predict_grid(model, stack)
    save_grid(args.out, GridStack({}, grid, stack.time_start, stack.time_end))
    _summary(model=model.kind, n_valid=int(grid.valid_mask().sum()), out=args.out)


def cmd_composite(args) -> None:
    stacks = [load_grid(p) for p in args.inputs]
    grid, counts = composite_average([_plane(s, args.band) for s in stacks], return_counts=True)
    starts = [s.time_start for s in stacks if s.time_start]
    ends = [s.time_end for s in stacks if s.time_end]
    name = args.band or CHL_BAND
    stack = _single_plane(grid, name)
    save_grid(args.out, GridStack(stack.bands, stack.chl, min(starts) if starts else None,
                                  max(ends) if ends else None))
    _summary(n_inputs=len(stacks), n_valid=int((counts > 0).sum()), out=args.out)


def cmd_diff_grid(args) -> None:
    pred = _plane(load_grid(args.pred), args.band)
    truth = _plane(load_grid(args.truth), args.band)
    err = relative_error_grid(pred, truth)
    save_grid(args.out, _single_plane(err, "rel_error"))
    ok = err.valid_mask()
    mean_abs = float(np.abs(err.values[ok]).mean()) if ok.any() else math.nan
    _summary(n_valid=int(ok.sum()), mean_abs_rel_error=mean_abs, out=args.out)


def _values(path: str, column: str, band: Optional[str]) -> np.ndarray:
    if _is_grid_file(path):
        g = _plane(load_grid(path), band)
        return g.values[g.valid_mask()]
    table = load_table(path)
    if column not in TABLE_HEADER:
        raise SchemaError(f"unknown column {column!r}")
    if column == "chl_a":
        return table.chl[table.has_chl]
    return table.rrs[:, TABLE_HEADER.index(column)]


def cmd_kde(args) -> None:
    v = _values(args.input, args.column, args.band)
    if args.log10:
        if np.any(v <= 0):
            raise ArgumentError("log10 density needs positive values")
        v = np.log10(v)
    h = args.bandwidth if args.bandwidth is not None else silverman_bandwidth(v)
    curve = kde_density(v, h, default_grid(v, h, args.points))
    Path(args.out).write_text(curve.to_csv(), encoding="utf-8")
    _summary(n=curve.n, bandwidth=curve.bandwidth, integral=curve.integral(), out=args.out)


def cmd_oc4(args) -> None:
    coeffs = load_coeffs(args.coeffs)
    if _is_grid_file(args.input):
        stack = load_grid(args.input)
        grid = baseline_grid(stack, coeffs)
        save_grid(args.out, GridStack({}, grid, stack.time_start, stack.time_end))
        _summary(n_valid=int(grid.valid_mask().sum()), coeffs=args.coeffs, out=args.out)
        return
    table = load_table(args.input)
    chl = baseline_chl(table.rrs, coeffs)
    Path(args.out).write_text(write_table(SampleTable(table.rrs, chl)), encoding="utf-8")
    _summary(n_rows=len(table), coeffs=args.coeffs, out=args.out)


def cmd_render(args) -> None:
    grid = _plane(load_grid(args.input), args.band)
    Path(args.out).write_bytes(render_map(grid, args.lo, args.hi, args.scale))
    _summary(width=grid.n_cols, height=grid.n_rows, scale=args.scale, out=args.out)


def cmd_bench_synth(args) -> None:
    result = run_synthetic_benchmark(args.n, args.noise, args.seed, args.out,
                                     train_frac=args.train_frac, test_frac=args.test_frac,
                                     coeffs=load_coeffs(args.coeffs))
    _summary(**result.summary(), **({"out": args.out} if args.out else {}))


# ---------------------------------------------------------------------------
# parser


def _hp_flags(p: argparse.ArgumentParser) -> None:
    # suppressed defaults tell "not given" apart from an explicit "--max-depth none"
    g = p.add_argument_group("hyperparameters", argument_default=argparse.SUPPRESS)
    g.add_argument("--lambda", dest="lam", type=float, help="ridge penalty")
    g.add_argument("--n-estimators", type=int)
    g.add_argument("--max-features", type=int)
    g.add_argument("--max-depth", type=_max_depth, help="integer or 'none'")
    g.add_argument("--min-samples-split", type=int)
    g.add_argument("--bootstrap", action=argparse.BooleanOptionalAction)
    g.add_argument("--c", type=float, help="SVR box constraint")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--gamma", type=_gamma, help="RBF width or 'scale'")
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--aggregation", choices=("mean", "median"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oceanchl", allow_abbrev=False,
                                     description="Chlorophyll-a regression from ocean reflectance.")
    parser.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto",
                        help="kernel implementation (default: compiled when built)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "convert a grid file to a table CSV or back")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-rows", type=int)
    p.add_argument("--n-cols", type=int)
    p.add_argument("--bounds", type=_bounds, help="NORTH,SOUTH,WEST,EAST in degrees")
    p.add_argument("--fill-value", type=float, default=-999.0)
    p.add_argument("--all-pixels", action="store_true",
                   help="grid to table: keep every pixel in row-major order, fill included")
    p.add_argument("--time-start")
    p.add_argument("--time-end")

    p = add("split", cmd_split, "seeded train/test split of a table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--train-frac", type=_fraction, default=0.05)
    p.add_argument("--test-frac", type=_fraction, default=0.01)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out-train")
    p.add_argument("--out-test")

    p = add("train", cmd_train, "fit one estimator and save it as JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=KINDS)
    p.add_argument("--spec-file")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--log-target", action="store_true", help="fit log10(chl)")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--oob", action="store_true", help="report the out-of-bag MAE")
    p.add_argument("--search-max-features", action="store_true",
                   help="pick max_features in 1..6 by out-of-bag MAE")
    _hp_flags(p)

    p = add("compare", cmd_compare, "fit several estimators and score them on a test table")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--specs", choices=("all-defaults",), default="all-defaults")
    g.add_argument("--spec-file")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="report CSV")
    p.add_argument("--text", help="aligned text report (default: standard error)")
    p.add_argument("--predictions", help="CSV of test predictions per model")
    p.add_argument("--n-jobs", type=int, default=1)

    p = add("predict-grid", cmd_predict_grid, "apply a saved model to every pixel of a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("composite", cmd_composite, "per-pixel mean over several grids")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band", help="plane to average (default: chl)")

    p = add("diff-grid", cmd_diff_grid, "signed relative error of a predicted grid")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band")

    p = add("kde", cmd_kde, "Gaussian kernel density of a table column or grid plane")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--column", default="chl_a", help="table column (default chl_a)")
    p.add_argument("--band", help="grid plane (default chl)")
    p.add_argument("--bandwidth", type=float, help="default: Silverman's rule")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--log10", action="store_true", help="estimate the density of log10 values")

    p = add("oc4", cmd_oc4, "band-ratio baseline chlorophyll for a grid or table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--coeffs", default="paper", help="paper, canonical or a JSON file")

    p = add("render", cmd_render, "colour map of a grid as binary PPM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band")
    p.add_argument("--lo", type=float, default=0.01)
    p.add_argument("--hi", type=float, default=10.0)
    p.add_argument("--scale", choices=("log10", "linear"), default="log10")

    p = add("bench-synth", cmd_bench_synth, "synthetic benchmark of all eight estimators")
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--train-frac", type=_fraction, default=0.05)
    p.add_argument("--test-frac", type=_fraction, default=0.01)
    p.add_argument("--coeffs", default="paper", help="paper, canonical or a JSON file")
    p.add_argument("--out", help="directory for the tables and reports")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    previous = _backend.name()
    try:
        if args.backend != "auto":
            _backend.set_backend(args.backend)
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"oceanchl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ChlError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        _backend.set_backend(previous)
    return 0


if __name__ == "__main__":
    sys.exit(main())
