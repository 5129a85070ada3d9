"""Command-line front end: simulate, solve, evolve, compare, tails.

Exit status: 0 success, 2 invalid input, 3 solver failure, 4 a comparison
above its threshold. Output directories default to ``$INTERVALCHOICE_OUT``
(or the working directory).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from intervalchoice import io, metrics
from intervalchoice.evolution import (
    PreconditionError,
    RefinementError,
    SolverError,
    TailFitError,
    default_grid,
    default_x_max,
    evolve,
    fixed_point,
    kakutani_profile,
    ode_solve,
    rule_slope,
    size_biased_exponential,
    tail_fit,
)
from intervalchoice.grid import GridError, GridFunction, make_grid
from intervalchoice.intervals import ConfigError, IntervalTable, empirical_cdf_values, make_rng, run
from intervalchoice.psi import RuleError, parse_rule

OUT_ENV = "INTERVALCHOICE_OUT"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4
LENGTHS_FILE = "lengths.npy"


class UsageError(ValueError):
    pass


def _out_default(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, ".")) / name


def _count(text: str) -> int:
    """Integer flag that also accepts ``1e6``."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v < 0 or v != int(v):
        raise argparse.ArgumentTypeError(f"not a nonnegative integer: {text!r}")
    return int(v)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list: {text!r}") from None


# -- simulate ------------------------------------------------------------------

def _replica(job: dict) -> dict:
    """One seeded run; module-level so worker processes can import it."""
    rule = parse_rule(job["psi"])
    rng = make_rng(job["seed"])
    kw = {"track_positions": job["track_positions"], "clock": job["clock"],
          "clock_seed": job["clock_seed"]}
    if job["init"] is not None:
        table = IntervalTable.from_config(job["init"], **kw)
    else:
        table = IntervalTable.random_config(job["init_random"], rng, **kw)
    report = run(table, rule, job["steps"], rng, seed=job["seed_label"])
    out = {
        "report": report.to_dict(),
        "hist": table.density_histogram(job["bins"], job["xmax"]),
        "rescaled": table.rescaled_lengths(),
        "audit": table.audit(),
    }
    if job["track_positions"]:
        out["positions"] = table.position_histogram(job["position_bins"])
    return out


def cmd_simulate(args) -> int:
    parse_rule(args.psi)
    if (args.init is None) == (args.init_random is None):
        raise UsageError("give exactly one of --init and --init-random")
    if args.replicas < 1:
        raise UsageError("--replicas must be at least 1")
    if args.init_random is not None and args.init_random < 1:
        raise UsageError("--init-random needs at least one interval")
    out = Path(args.out) if args.out else _out_default("sim")
    if args.replicas == 1:
        seeds = [args.seed]
    else:
        seeds = np.random.SeedSequence(args.seed).spawn(args.replicas)
    jobs = [{
        "psi": args.psi, "seed": s, "seed_label": args.seed if args.replicas == 1 else [args.seed, k],
        "init": args.init, "init_random": args.init_random, "steps": args.steps,
        "bins": args.bins, "xmax": args.xmax, "track_positions": args.track_positions,
        "position_bins": args.position_bins, "clock": args.clock,
        "clock_seed": [args.seed, k, 1],
    } for k, s in enumerate(seeds)]
    workers = min(args.replicas, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_replica, jobs))
    else:
        results = [_replica(j) for j in jobs]

    # fixed-order merge: replica 0, 1, ...
    hist = results[0]["hist"]
    for r in results[1:]:
        hist = hist.merge(r["hist"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_histogram(out / "histogram.csv", hist)
    np.save(out / LENGTHS_FILE, np.concatenate([r["rescaled"] for r in results]))
    if args.track_positions:
        pos = results[0]["positions"]
        for r in results[1:]:
            pos = pos.merge(r["positions"])
        io.write_histogram(out / "positions.csv", pos)
    reports = [r["report"] for r in results]
    summary = dict(reports[0])
    summary.update({
        "seed": args.seed,
        "psi": args.psi,
        "replicas": args.replicas,
        "bins": args.bins,
        "xmax": args.xmax,
        "overflow_mass": hist.overflow_mass,
        "audit": [r["audit"] for r in results],
    })
    if args.replicas > 1:
        summary["replica_reports"] = reports
    io.write_json(out / "report.json", summary)
    print(f"simulate: {args.psi} steps={args.steps} count={reports[0]['count']} -> {out}")
    return EXIT_OK


# -- solve -----------------------------------------------------------------------

def _tail_window(F: GridFunction, heavy: bool) -> tuple[float, float]:
    X = F.x_max
    if heavy:
        return X / 100.0, X / 10.0
    return (8.0, 14.0) if X >= 14.0 else (0.2 * X, 0.35 * X)


def _tail_summary(rule, F: GridFunction) -> dict:
    heavy = float(rule_slope(rule, 1.0)) <= 1e-9
    window = _tail_window(F, heavy)
    try:
        fit = tail_fit(F, "min_tail" if heavy else "max_tail", window)
    except TailFitError as exc:
        return {"error": str(exc)}
    return fit.to_dict()


def cmd_solve(args) -> int:
    rule = parse_rule(args.psi)
    out = Path(args.out) if args.out else _out_default("solution.csv")
    x_max = args.grid_max if args.grid_max is not None else default_x_max(rule)
    grid = make_grid(x_max, args.grid_points)
    if args.method == "picard":
        F = fixed_point(rule, grid=grid, tol=args.tol if args.tol is not None else 1e-8)
    else:
        kw = {} if args.tol is None else {"tol": args.tol}
        F = ode_solve(rule, grid=grid, **kw)
    side = {k: v for k, v in F.meta.items() if k not in ("trace",)}
    side.update({
        "psi": args.psi,
        "method": args.method,
        "grid_points": args.grid_points,
        "grid_max": x_max,
        "F_at_1": float(F(1.0)),
        "tail": _tail_summary(rule, F),
        "entropy": metrics.entropy_of(F),
    })
    if "trace" in F.meta:
        side["residual_trace"] = list(F.meta["trace"])
    io.write_solution(out, F, side)
    print(f"solve: {args.psi} ({args.method}) F(1)={side['F_at_1']:.10f} "
          f"candy={side['candy_norm']:.12f} -> {out}")
    return EXIT_OK


# -- evolve ----------------------------------------------------------------------

_BUILTIN = {"kakutani": kakutani_profile, "exponential": size_biased_exponential}


def _initial(spec: str, rule) -> GridFunction:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in _BUILTIN:
            raise UsageError(f"unknown builtin profile {name!r}; use {sorted(_BUILTIN)}")
        # the Kakutani kink at 2 is a node so both builtins share one grid
        xs = np.union1d(default_grid(rule), [2.0])
        return _BUILTIN[name](xs)
    return io.read_solution(spec)


def cmd_evolve(args) -> int:
    rule = parse_rule(args.psi)
    F0 = _initial(args.f0, rule)
    G0 = _initial(args.g0, rule)
    if not np.array_equal(F0.xs, G0.xs):
        raise UsageError("--f0 and --g0 live on different grids")
    if args.steps < 1 or not args.t > 0:
        raise UsageError("need --t > 0 and --steps >= 1")
    out = Path(args.out) if args.out else _out_default("evolve")
    A = evolve(rule, F0, args.t, args.steps)
    B = A if args.f0 == args.g0 else evolve(rule, G0, args.t, args.steps)
    d0 = metrics.d_candy(F0, G0)
    rows = []
    for t, f, g in zip(A.times, A.frames, B.frames):
        d = metrics.d_candy(f, g)
        bound = math.exp(-t) * d0
        rows.append((t, d, bound, d / bound if bound > 0 else 0.0))
    io.write_trajectory(out / "f", A)
    io.write_trajectory(out / "g", B)
    io.write_contraction(out / "contraction.csv", rows)
    io.write_json(out / "evolve.json", {
        "psi": args.psi, "t": args.t, "steps": args.steps, "d0": d0,
        "final_ratio": rows[-1][3], "max_ratio": max(r[3] for r in rows),
        "substeps": [A.meta["substeps"], B.meta["substeps"]],
    })
    print(f"evolve: {args.psi} T={args.t} final ratio {rows[-1][3]:.6f} -> {out}")
    return EXIT_OK


# -- compare ---------------------------------------------------------------------

def _load_lengths(path: Path) -> np.ndarray:
    f = path / LENGTHS_FILE
    if not f.exists():
        raise FileNotFoundError(f"{f} not found; run simulate first")
    return np.load(f)


def _ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """Exact sup-distance of two size-biased empirical distribution functions.

    Both are right-continuous step functions, so the supremum is attained
    at a jump of one of them.
    """
    pts = np.union1d(a, b)
    return float(np.max(np.abs(empirical_cdf_values(a, pts) - empirical_cdf_values(b, pts))))


def _empirical(samples: np.ndarray, xs: np.ndarray) -> GridFunction:
    vals = empirical_cdf_values(samples, xs)
    vals[0] = 0.0
    return GridFunction(xs, vals, tail_value=1.0)


def cmd_compare(args) -> int:
    sim = Path(args.sim)
    lengths = _load_lengths(sim)
    target = Path(args.solution)
    if target.is_dir():
        other = _load_lengths(target)
        ks = _ks_two_sample(lengths, other)
        xs = make_grid(1.01 * max(lengths.max(), other.max()), 4096)
        F = _empirical(other, xs)
    else:
        F = io.read_solution(target)
        xs = F.xs
        ks = metrics.ks_to_sample(F, lengths)
    E = _empirical(lengths, xs)
    result = {
        "sim": str(sim),
        "solution": str(target),
        "samples": int(lengths.size),
        "ks": ks,
        "ks_grid": metrics.ks_distance(E, F),
        "d_candy_grid": metrics.d_candy(E, F),
        "threshold": args.threshold,
        "pass": bool(ks <= args.threshold),
    }
    if args.out:
        io.write_json(args.out, result)
    print(f"compare: ks={ks:.6g} d_candy={result['d_candy_grid']:.6g} "
          f"threshold={args.threshold} {'PASS' if result['pass'] else 'FAIL'}")
    return EXIT_OK if result["pass"] else EXIT_THRESHOLD


# -- tails -----------------------------------------------------------------------

def cmd_tails(args) -> int:
    F = io.read_solution(args.solution)
    if len(args.window) != 2:
        raise UsageError("--window takes two numbers A,B")
    model = {"max": "max_tail", "min": "min_tail"}[args.model]
    fit = tail_fit(F, model, tuple(args.window), power=args.power)
    d = fit.to_dict()
    if args.out:
        io.write_json(args.out, d)
    print(f"tails: {model} window=[{fit.window[0]:g},{fit.window[1]:g}] slope={fit.slope:.6f} "
          f"level={fit.level:.6g} rms={fit.rms:.3g} n={fit.n}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intervalchoice", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the splitting process")
    s.add_argument("--psi", required=True, help="max:K, min:K, uniform, kakutani, table:PATH, density:PATH")
    s.add_argument("--steps", type=_count, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--init", type=_floats, help="initial lengths L1,L2,... summing to 1")
    s.add_argument("--init-random", type=int, help="M intervals from M-1 uniform cuts")
    s.add_argument("--bins", type=int, default=1024)
    s.add_argument("--xmax", type=float, default=4.0)
    s.add_argument("--track-positions", action="store_true")
    s.add_argument("--position-bins", type=int, default=128)
    s.add_argument("--clock", action="store_true", help="attach the continuous-time clock")
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV}/sim)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="compute the limiting profile")
    s.add_argument("--psi", required=True)
    s.add_argument("--method", choices=("picard", "shoot"), default="picard")
    s.add_argument("--grid-points", type=int, default=4096)
    s.add_argument("--grid-max", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--out", help=f"solution CSV (default ${OUT_ENV}/solution.csv)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("evolve", help="evolve two initial profiles and tabulate contraction")
    s.add_argument("--psi", required=True)
    s.add_argument("--f0", required=True, help="solution CSV or builtin:kakutani|exponential")
    s.add_argument("--g0", required=True, help="solution CSV or builtin:kakutani|exponential")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--steps", type=int, default=10)
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV}/evolve)")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("compare", help="distance between a simulation and a profile")
    s.add_argument("--sim", required=True, help="simulate output directory")
    s.add_argument("--solution", required=True, help="solution CSV or another simulate directory")
    s.add_argument("--threshold", type=float, default=0.01)
    s.add_argument("--out", help="optional JSON report")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("tails", help="fit the tail of a solution")
    s.add_argument("--solution", required=True)
    s.add_argument("--model", choices=("max", "min"), required=True)
    s.add_argument("--window", type=_floats, required=True)
    s.add_argument("--power", type=float, help="fixed power for the min-tail level")
    s.add_argument("--out", help="optional JSON report")
    s.set_defaults(func=cmd_tails)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (SolverError, RefinementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", ())
        if len(trace):
            tail = ", ".join(f"{v:.3e}" for v in list(trace)[-10:])
            print(f"residual trace (last {min(10, len(trace))}): {tail}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, RuleError, ConfigError, GridError, PreconditionError, TailFitError,
            io.FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
