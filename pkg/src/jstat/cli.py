"""Command-line front end: simulate, estimate, test, envelope, power.

Decisions (reject/accept) land in the output files, never in exit codes, so
batch runs aggregate cleanly. Exit status is 0 on completion, 2 on usage
errors, 3 on data or configuration errors. Every run writes a manifest next
to its primary output recording the resolved parameters and seed;
re-running the same command reproduces the data outputs byte for byte.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from ._version import __version__
from .estimate import EstimateTable, EstimationError, RGrid, default_rgrid_for
from .geometry import (
    Window,
    WindowError,
    box3d,
    make_grid,
    rect2d,
    two_rect_window,
    unit_cube,
    unit_square,
)
from .inference import (
    ConfigMismatchError,
    NullDistribution,
    build_null,
    default_null_rgrid,
    envelope,
    power_study,
    test_csr,
    write_power_csv,
)
from .patterns import PatternError, PointPattern
from .simulate import SimConfig, SimulationError, matern2_primary_intensity

DEFAULT_R_COUNT = 512
DEFAULT_POWER_RADII = [round(0.005 * k, 10) for k in range(1, 23)]


class CliDataError(Exception):
    """Mapped to exit code 3."""


def _parse_window(args) -> Window:
    if getattr(args, "window_json", None):
        try:
            return Window.from_dict(json.loads(Path(args.window_json).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliDataError(f"cannot read window JSON: {exc}") from exc
    spec = getattr(args, "window", None)
    if spec is None:
        raise CliDataError("a window is required (--window or --window-json)")
    name, _, rest = spec.partition(":")
    try:
        if name == "unit-square":
            return unit_square()
        if name == "unit-cube":
            return unit_cube()
        if name == "rect":
            a, b = (float(v) for v in rest.split(","))
            return rect2d((0.0, 0.0), (a, b))
        if name == "box":
            a, b, c = (float(v) for v in rest.split(","))
            return box3d((0.0, 0.0, 0.0), (a, b, c))
        if name == "two-rect":
            if rest:
                w, h, gap = (float(v) for v in rest.split(","))
                return two_rect_window(w, h, gap)
            return two_rect_window()
    except (ValueError, WindowError) as exc:
        raise CliDataError(f"bad window spec {spec!r}: {exc}") from exc
    raise CliDataError(f"unknown window spec {spec!r}")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("JSTAT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliDataError(f"JSTAT_SEED must be an integer, got {env!r}") from exc
    return 0


def _write_manifest(primary_out, subcommand, params, inputs, outputs, t0):
    manifest = {
        "subcommand": subcommand,
        "params": params,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "versions": {
            "jstat": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_clock_s": round(time.monotonic() - t0, 3),
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = Path(str(primary_out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2))
    return path


def _load_pattern(args, window: Window) -> PointPattern:
    try:
        return PointPattern.from_csv(args.pattern, window)
    except (OSError, PatternError, ValueError) as exc:
        raise CliDataError(f"cannot load pattern: {exc}") from exc


def _rgrid_from_args(args, fallback):
    if args.r_max is not None:
        return RGrid.regular(args.r_max, args.r_count)
    return fallback()


# -- subcommands -----------------------------------------------------------


def _cmd_simulate(args):
    t0 = time.monotonic()
    window = _parse_window(args)
    seed = _resolve_seed(args)
    params = {}
    if args.config:
        try:
            params.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliDataError(f"cannot read config: {exc}") from exc
    for name, value in (
        ("lam", args.lam),
        ("n", args.n),
        ("lam_p", args.lam_p),
        ("R", args.R),
        ("mu", args.mu),
        ("kappa", args.kappa),
    ):
        if value is not None:
            params[name] = value
    model = args.model or params.pop("model", None)
    if model is None:
        raise CliDataError("a model is required (--model or config)")
    if model == "matern2" and args.retained_intensity is not None:
        if params.get("R") is None:
            raise CliDataError("--retained-intensity needs --R")
        params["lam_p"] = matern2_primary_intensity(
            args.retained_intensity, params["R"], window.dim
        )
    try:
        config = SimConfig(model=model, window=window, seed=seed, **params)
        pattern = config.sample(replicate=args.replicate)
    except (SimulationError, TypeError) as exc:
        raise CliDataError(str(exc)) from exc
    pattern.to_csv(args.out)
    outputs = [args.out]
    if args.plot:
        from . import plots

        plots.save(plots.plot_pattern(pattern), args.plot)
        outputs.append(args.plot)
    _write_manifest(
        args.out,
        "simulate",
        {**config.to_dict(), "replicate": args.replicate},
        [],
        outputs,
        t0,
    )
    print(f"wrote {args.out} (n={pattern.n})")
    return 0


def _cmd_estimate(args):
    t0 = time.monotonic()
    window = _parse_window(args)
    pattern = _load_pattern(args, window)
    grid = make_grid(window, args.grid_target)
    if pattern.n == 0 and args.r_max is None:
        raise CliDataError("an empty pattern needs an explicit --r-max")
    rgrid = _rgrid_from_args(args, lambda: default_rgrid_for(pattern, grid, args.r_count))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = EstimateTable.compute(pattern, grid=grid, rgrid=rgrid)
    for warning in caught:
        print(f"warning: {warning.message}", file=sys.stderr)
    table.to_csv(args.out)
    outputs = [args.out]
    if args.plot:
        from . import plots

        plots.save(plots.plot_estimates(table), args.plot)
        outputs.append(args.plot)
    _write_manifest(
        args.out,
        "estimate",
        {
            "window": window.to_dict(),
            "r_max": float(rgrid.values[-1]),
            "r_count": len(rgrid),
            "grid_target": args.grid_target,
            "n": pattern.n,
        },
        [args.pattern],
        outputs,
        t0,
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_build_null(args):
    t0 = time.monotonic()
    window = _parse_window(args)
    seed = _resolve_seed(args)
    config = SimConfig(model="poisson", window=window, lam=args.lam, seed=seed)
    rgrid = _rgrid_from_args(
        args, lambda: default_null_rgrid(args.lam, window.dim, args.r_count)
    )
    null = build_null(
        config,
        variant=args.estimator,
        reps=args.reps,
        rgrid=rgrid,
        grid_target=args.grid_target,
        transform=args.transform,
        jobs=args.jobs,
    )
    null.save(args.out)
    _write_manifest(
        args.out,
        "build-null",
        {
            "lam": args.lam,
            "window": window.to_dict(),
            "estimator": args.estimator,
            "reps": args.reps,
            "seed": seed,
            "transform": args.transform,
        },
        [],
        [args.out],
        t0,
    )
    print(f"wrote {args.out} (reps={args.reps}, estimator={args.estimator})")
    return 0


def _load_null(path) -> NullDistribution:
    try:
        return NullDistribution.load(path)
    except (OSError, KeyError, json.JSONDecodeError, EstimationError) as exc:
        raise CliDataError(f"cannot load null distribution: {exc}") from exc


def _cmd_test_csr(args):
    t0 = time.monotonic()
    if not args.null and not args.build_null:
        raise CliDataError("either --null FILE or --build-null is required")
    if args.null:
        null = _load_null(args.null)
        window = null.window if args.window is None and args.window_json is None else _parse_window(args)
    else:
        window = _parse_window(args)
        null = None
    pattern = _load_pattern(args, window)
    if null is None:
        lam = pattern.intensity
        if lam <= 0:
            raise CliDataError("cannot build a null for an empty pattern")
        seed = _resolve_seed(args)
        config = SimConfig(model="poisson", window=window, lam=lam, seed=seed)
        null = build_null(
            config,
            variant=args.estimator,
            reps=args.reps,
            grid_target=args.grid_target,
            jobs=args.jobs,
        )
        if args.save_null:
            null.save(args.save_null)
    result = test_csr(pattern, null)
    payload = result.to_dict()
    payload["window"] = null.window.to_dict()
    payload["null_config_hash"] = null.config_hash
    Path(args.out).write_text(json.dumps(payload, indent=2))
    _write_manifest(
        args.out,
        "test-csr",
        {"null": args.null, "pattern": args.pattern},
        [args.pattern] + ([args.null] if args.null else []),
        [args.out],
        t0,
    )
    decision = payload["decisions"]["two_sided_5pct"]
    print(f"tau={result.tau:.4f} two-sided: {decision}; wrote {args.out}")
    return 0


def _cmd_envelope(args):
    t0 = time.monotonic()
    window = _parse_window(args)
    pattern = _load_pattern(args, window)
    seed = _resolve_seed(args)
    grid = make_grid(window, args.grid_target)
    rgrid = _rgrid_from_args(args, lambda: default_rgrid_for(pattern, grid, args.r_count))
    env = envelope(
        pattern,
        variant=args.estimator,
        n_sims=args.sims,
        seed=seed,
        rgrid=rgrid,
        grid_target=args.grid_target,
        jobs=args.jobs,
    )
    env.to_csv(args.out)
    outputs = [args.out]
    if args.plot:
        from . import plots

        plots.save(plots.plot_envelope(env), args.plot)
        outputs.append(args.plot)
    _write_manifest(
        args.out,
        "envelope",
        {
            "window": window.to_dict(),
            "sims": args.sims,
            "estimator": args.estimator,
            "seed": seed,
        },
        [args.pattern],
        outputs,
        t0,
    )
    print(f"wrote {args.out}")
    return 0


def _parse_float_list(text) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CliDataError(f"bad list {text!r}: {exc}") from exc


def _cmd_power(args):
    t0 = time.monotonic()
    null = _load_null(args.null)
    seed = _resolve_seed(args)
    radii = _parse_float_list(args.R_list) if args.R_list else DEFAULT_POWER_RADII
    if args.model == "matern2":
        cells = [{"R": r} for r in radii]
    elif args.model == "matern-cluster":
        mus = _parse_float_list(args.mu_list) if args.mu_list else [1.0, 2.0, 4.0]
        cells = [{"R": r, "mu": mu} for r in radii for mu in mus]
    else:
        cells = [{}]
    try:
        result = power_study(
            args.model,
            cells,
            null,
            reps=args.reps,
            seed=seed,
            grid_target=args.grid_target,
            jobs=args.jobs,
        )
    except (EstimationError, SimulationError) as exc:
        raise CliDataError(str(exc)) from exc
    write_power_csv(result, args.out)
    outputs = [args.out]
    if args.plot:
        from . import plots

        plots.save(plots.plot_power(result), args.plot)
        outputs.append(args.plot)
    _write_manifest(
        args.out,
        "power",
        {"model": args.model, "cells": cells, "reps": args.reps, "seed": seed},
        [args.null],
        outputs,
        t0,
    )
    print(f"wrote {args.out} ({len(result)} cells)")
    return 0


# -- parser ----------------------------------------------------------------


def _add_window_opts(p):
    p.add_argument(
        "--window",
        help="inline window: unit-square | unit-cube | rect:a,b | box:a,b,c | two-rect[:w,h,gap]",
    )
    p.add_argument("--window-json", help="path to a window JSON file (canonical form)")


def _add_common(p, grid=True):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides JSTAT_SEED)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for replicates")
    if grid:
        p.add_argument("--grid-target", type=int, default=None, help="evaluation grid size")
        p.add_argument("--r-max", type=float, default=None, help="upper end of the r grid")
        p.add_argument("--r-count", type=int, default=DEFAULT_R_COUNT, help="r grid length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jstat",
        description="Spatial F/G/J summary statistics, CSR tests and power studies.",
    )
    parser.add_argument("--version", action="version", version=f"jstat {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="draw one pattern from a point-process model")
    p.add_argument("--model", choices=("poisson", "binomial", "matern2", "matern-cluster"))
    p.add_argument("--lambda", dest="lam", type=float, help="intensity (poisson)")
    p.add_argument("--n", type=int, help="point count (binomial)")
    p.add_argument("--lambda-p", dest="lam_p", type=float, help="primary intensity (matern2)")
    p.add_argument(
        "--retained-intensity",
        type=float,
        help="matern2: choose the primary intensity so thinning retains this intensity",
    )
    p.add_argument("--R", type=float, help="hard-core or cluster radius")
    p.add_argument("--mu", type=float, help="mean offspring per parent (matern-cluster)")
    p.add_argument("--kappa", type=float, help="parent intensity (matern-cluster)")
    p.add_argument("--config", help="JSON file with model parameters")
    p.add_argument("--replicate", type=int, default=0, help="replicate stream index")
    _add_window_opts(p)
    _add_common(p, grid=False)
    p.add_argument("--out", required=True, help="pattern CSV to write")
    p.add_argument("--plot", help="also render the pattern to this image file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="tabulate all F/G/J estimates for a pattern")
    p.add_argument("--pattern", required=True, help="pattern CSV (header x,y or x,y,z)")
    _add_window_opts(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="estimate CSV to write")
    p.add_argument("--plot", help="also render the curves to this image file")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("build-null", help="estimate a null distribution under Poisson")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--estimator", choices=("uncorrected", "rs", "km"), default="uncorrected")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--transform", choices=("identity", "sqrt"), default="identity")
    _add_window_opts(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="null JSON to write")
    p.set_defaults(func=_cmd_build_null)

    p = sub.add_parser("test-csr", help="test one pattern for complete spatial randomness")
    p.add_argument("--pattern", required=True)
    p.add_argument("--null", help="null JSON from build-null")
    p.add_argument("--build-null", action="store_true", help="build the null on the fly")
    p.add_argument("--estimator", choices=("uncorrected", "rs", "km"), default="uncorrected")
    p.add_argument("--reps", type=int, default=10000, help="reps for --build-null")
    p.add_argument("--save-null", help="store the on-the-fly null here")
    _add_window_opts(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="result JSON to write")
    p.set_defaults(func=_cmd_test_csr)

    p = sub.add_parser("envelope", help="simulation envelope around an observed J curve")
    p.add_argument("--pattern", required=True)
    p.add_argument("--sims", type=int, default=99)
    p.add_argument("--estimator", choices=("uncorrected", "rs", "km"), default="uncorrected")
    _add_window_opts(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="envelope CSV to write")
    p.add_argument("--plot", help="also render the envelope to this image file")
    p.set_defaults(func=_cmd_envelope)

    p = sub.add_parser("power", help="rejection proportions over a grid of alternatives")
    p.add_argument("--model", choices=("matern2", "matern-cluster", "poisson"), required=True)
    p.add_argument("--null", required=True, help="null JSON from build-null")
    p.add_argument("--R-list", help="comma-separated radii (default 0.005..0.11)")
    p.add_argument("--mu-list", help="comma-separated mean cluster sizes")
    p.add_argument("--reps", type=int, default=1000)
    _add_window_opts(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="power CSV to write")
    p.add_argument("--plot", help="also render the power curves to this image file")
    p.set_defaults(func=_cmd_power)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        WindowError,
        PatternError,
        EstimationError,
        ConfigMismatchError,
        SimulationError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
