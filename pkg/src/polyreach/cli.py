"""Command-line driver: reach, simulate, project, check.

Exit codes: 0 success, 2 configuration error, 3 solver cap exceeded,
4 containment audit failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .io import (
    ConfigError,
    RunConfig,
    build_system,
    config_from_dict,
    config_to_dict,
    export_polygon_csv,
    export_trajectories_csv,
    load_config,
    load_result,
    project_2d,
    save_result,
)
from .oracle import simulate
from .reach import ReachAborted, max_violation, reach

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_AUDIT = 4

AUDIT_TOL = 1e-6


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyreach",
        description="Certified polytopic reachable sets for ReLU-controlled affine systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_reach = sub.add_parser("reach", help="run the full pipeline and save a result file")
    p_reach.add_argument("--config", required=True, help="run configuration JSON")
    p_reach.add_argument("--out", help="result JSON path (default: <config>.result.json)")
    p_reach.add_argument("--eps", type=float, help="override the config epsilon")
    p_reach.add_argument("--lambda", dest="lam", type=float, help="override the config lambda")
    p_reach.add_argument("--seed", type=int, help="override the config seed")
    p_reach.add_argument("--workers", type=int, default=1, help="parallel direction solves per step")

    p_sim = sub.add_parser("simulate", help="sample closed-loop trajectories to CSV")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", help="CSV path (default: <config>.trajectories.csv)")
    p_sim.add_argument("--samples", type=int, default=10_000)
    p_sim.add_argument("--seed", type=int, help="override the config seed")

    p_proj = sub.add_parser("project", help="export 2-D polygons of a result's polytopes")
    p_proj.add_argument("--result", required=True, help="result JSON from the reach command")
    p_proj.add_argument("--dims", default="0,1", help="coordinate pair i,j (default 0,1)")
    p_proj.add_argument("--angles", type=int, default=64)
    p_proj.add_argument("--step", type=int, help="single step k (default: every step)")
    p_proj.add_argument("--out", help="output CSV path or prefix (default: <result>.polygon)")

    p_check = sub.add_parser("check", help="audit a result file against fresh simulations")
    p_check.add_argument("--result", required=True)
    p_check.add_argument("--samples", type=int, default=10_000)
    p_check.add_argument("--seed", type=int, help="override the echoed config seed")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if getattr(args, "eps", None) is not None:
        config = replace(config, epsilon=args.eps)
    if getattr(args, "lam", None) is not None:
        config = replace(config, lam=args.lam)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if not config.epsilon > 0:
        raise ConfigError("epsilon: must be > 0")
    if not 0 < config.lam <= 1:
        raise ConfigError("lambda: must be in (0, 1]")
    return config


def _cmd_reach(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    system = build_system(config)
    try:
        result = reach(
            system,
            horizon=config.horizon,
            epsilon=config.epsilon,
            lam=config.lam,
            rank_tol=config.rank_tol,
            node_cap=config.node_cap,
            workers=max(1, args.workers),
        )
    except ReachAborted as err:
        print(f"aborted: {err} (completed steps: {len(err.partial.polytopes) - 1})", file=sys.stderr)
        return EXIT_CAP
    out = args.out or _default_out(args.config, ".result.json")
    save_result(result, out, config_to_dict(config))
    solves = sum(len(s) for s in result.per_direction_stats)
    for k, poly in enumerate(result.polytopes):
        print(f"step {k}: {poly.n_facets} facets")
    print(f"solved {solves} direction problems in {result.wall_time:.2f} s -> {out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    system = build_system(config)
    steps = simulate(system, n_samples=args.samples, horizon=config.horizon, seed=config.seed)
    out = args.out or _default_out(args.config, ".trajectories.csv")
    export_trajectories_csv(steps, out)
    print(f"wrote {args.samples} trajectories over {config.horizon} steps -> {out}")
    return EXIT_OK


def _cmd_project(args) -> int:
    result, _ = load_result(args.result)
    try:
        i, j = (int(part) for part in args.dims.split(","))
    except ValueError:
        raise ConfigError("dims: expected two comma-separated indices, e.g. 0,1") from None
    steps = range(len(result.polytopes)) if args.step is None else [args.step]
    prefix = args.out or _default_out(args.result, ".polygon")
    for k in steps:
        if not 0 <= k < len(result.polytopes):
            raise ConfigError(f"step: {k} outside 0..{len(result.polytopes) - 1}")
        poly = result.polytopes[k]
        if max(i, j) >= poly.dim:
            print(f"step {k}: skipped (polytope dimension {poly.dim} below dims {i},{j})")
            continue
        vertices = project_2d(poly, (i, j), args.angles)
        path = prefix if (args.step is not None and args.out) else f"{prefix}_k{k}.csv"
        export_polygon_csv(vertices, path)
        print(f"step {k}: {len(vertices)} vertices -> {path}")
    return EXIT_OK


def _cmd_check(args) -> int:
    result, config_echo = load_result(args.result)
    if config_echo is None:
        raise ConfigError("config: result file carries no config echo to audit against")
    config = config_from_dict(config_echo)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    system = build_system(config)
    horizon = len(result.polytopes) - 1
    steps = simulate(system, n_samples=args.samples, horizon=horizon, seed=config.seed)
    # For zonotope runs step 0 is the z-cube while samples live in state space.
    first_checked = 1 if config.generator is not None else 0
    worst = -np.inf
    failed = False
    for k in range(first_checked, horizon + 1):
        violation = max_violation(result.polytopes[k], steps[k])
        worst = max(worst, violation)
        status = "ok" if violation <= AUDIT_TOL else "VIOLATED"
        print(f"step {k}: max violation {violation:.3e} [{status}]")
        failed = failed or violation > AUDIT_TOL
    if failed:
        print(f"audit FAILED (worst violation {worst:.3e} > {AUDIT_TOL:g})", file=sys.stderr)
        return EXIT_AUDIT
    print(f"audit passed ({args.samples} trajectories, worst violation {worst:.3e})")
    return EXIT_OK


def _default_out(source: str, suffix: str) -> str:
    stem, _ = os.path.splitext(source)
    return stem + suffix


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "reach": _cmd_reach,
        "simulate": _cmd_simulate,
        "project": _cmd_project,
        "check": _cmd_check,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
