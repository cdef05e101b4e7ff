"""Deterministic subcommands: fixed-points, simulate, period, hopf, sweep, canard."""

from __future__ import annotations

import argparse
import logging

from src.cli.context import CommandContext
from src.rhythm_engine.canard_analysis import measure_canard
from src.rhythm_engine.integrator import default_start, integrate, limit_cycle_period
from src.rhythm_engine.model_core import fixed_points, hopf_curve, hopf_epsilon
from src.rhythm_engine.storage.csv_store import (
    CANARD_HEADER,
    FIXED_POINTS_HEADER,
    HOPF_HEADER,
    SWEEP_HEADER,
    TRAJECTORY_HEADER,
    fixed_point_rows,
    trajectory_rows,
)
from src.rhythm_engine.sweeps import DEFAULT_EPS_GRID, DEFAULT_K_GRID, sweep_grid

logger = logging.getLogger(__name__)

DEFAULT_CANARD_EPSILONS = (1e-3, 1e-4, 1e-5)


def cmd_fixed_points(ctx: CommandContext) -> int:
    p = ctx.params()
    with ctx.stage("fixed_points"):
        points = fixed_points(p)
    ctx.emit_rows(FIXED_POINTS_HEADER, fixed_point_rows(points))
    interior = points[-1]
    ctx.headline = {
        "u_star": interior.location.u,
        "v_star": interior.location.v,
        "kind": interior.kind.value,
    }
    ctx.say(
        f"interior u*={interior.location.u:.8g} v*={interior.location.v:.8g} "
        f"kind={interior.kind.value}"
    )
    return 0


def cmd_simulate(ctx: CommandContext) -> int:
    p = ctx.params()
    with ctx.stage("integrate"):
        traj = integrate(default_start(p), p, ctx.config.integration)
    ctx.emit_rows(TRAJECTORY_HEADER, trajectory_rows(traj), tabular=False)
    ctx.headline = {
        "samples": len(traj),
        "dt": traj.dt,
        "floored_steps": traj.floored_steps,
    }
    ctx.say(f"samples={len(traj)} dt={traj.dt:g} floored_steps={traj.floored_steps}")
    return 0


def cmd_period(ctx: CommandContext) -> int:
    p = ctx.params()
    with ctx.stage("limit_cycle_period"):
        period = limit_cycle_period(p, ctx.config.integration)
    ctx.headline = {"period_ms": period}
    ctx.say(f"period_ms={period:.6g}")
    return 0


def cmd_hopf(ctx: CommandContext) -> int:
    args = ctx.args
    p = ctx.params(eps_default=1.0, K_default=args.k_min)
    with ctx.stage("hopf_curve"):
        rows = hopf_curve(args.k_min, args.k_max, args.samples, p)
    ctx.emit_rows(HOPF_HEADER, rows)
    if ctx.config.model.K is not None:
        eps_h = hopf_epsilon(p.K, p)
        ctx.headline = {"K": p.K, "eps_H": eps_h}
        ctx.say(f"eps_H={eps_h:.8g} at K={p.K:g}")
    else:
        ctx.headline = {"eps_H_min_K": rows[0][1], "eps_H_max_K": rows[-1][1]}
        ctx.say(
            f"eps_H={rows[0][1]:.8g} at K={rows[0][0]:g}, {rows[-1][1]:.8g} at K={rows[-1][0]:g}"
        )
    return 0


def cmd_sweep(ctx: CommandContext) -> int:
    args = ctx.args
    base = ctx.params(eps_default=args.eps_grid[0], K_default=args.k_grid[0])
    with ctx.stage("sweep_grid"):
        cells = sweep_grid(base, ctx.config.integration, args.eps_grid, args.k_grid)
    rows = [
        (
            c.K,
            c.eps,
            c.gamma,
            c.summary.kind,
            c.summary.period_ms,
            c.summary.u_min,
            c.summary.u_max,
            c.summary.v_min,
            c.summary.v_max,
        )
        for c in cells
    ]
    ctx.emit_rows(SWEEP_HEADER, rows)
    cycles = sum(1 for c in cells if c.summary.period_ms is not None)
    ctx.headline = {"cells": len(cells), "limit_cycles": cycles}
    ctx.say(f"cells={len(cells)} limit_cycles={cycles}")
    return 0


def cmd_canard(ctx: CommandContext) -> int:
    args = ctx.args
    p = ctx.params(eps_default=args.eps_list[0])
    with ctx.stage("measure_canard"):
        results = measure_canard(p, list(args.eps_list), args.entry_k, ctx.config.integration)
    ctx.emit_rows(
        CANARD_HEADER,
        [(m.epsilon, m.k_measured, m.y_bar, m.prediction, m.abs_error) for m in results],
    )
    last = results[-1]
    ctx.headline = {"prediction": last.prediction, "rel_error": last.rel_error}
    ctx.say(
        f"prediction={last.prediction:.6g} rel_error={last.rel_error:.3%} "
        f"at eps={last.epsilon:g}"
    )
    return 0


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    sub.add_parser(
        "fixed-points", parents=[common], help="Stationary points with classification"
    ).set_defaults(handler=cmd_fixed_points)

    sub.add_parser(
        "simulate", parents=[common], help="Deterministic RK4 trajectory (t_ms,u,v)"
    ).set_defaults(handler=cmd_simulate)

    sub.add_parser(
        "period", parents=[common], help="Limit-cycle period from v = v* up-crossings"
    ).set_defaults(handler=cmd_period)

    hopf = sub.add_parser("hopf", parents=[common], help="Hopf curve eps_H(K)")
    hopf.add_argument("--k-min", type=float, default=30.0)
    hopf.add_argument("--k-max", type=float, default=100.0)
    hopf.add_argument("--samples", type=int, default=71)
    hopf.set_defaults(handler=cmd_hopf)

    sweep = sub.add_parser("sweep", parents=[common], help="Attractor panorama over (eps, K)")
    sweep.add_argument("--eps-grid", type=float, nargs="+", default=list(DEFAULT_EPS_GRID))
    sweep.add_argument("--k-grid", type=float, nargs="+", default=list(DEFAULT_K_GRID))
    sweep.set_defaults(handler=cmd_sweep)

    canard = sub.add_parser("canard", parents=[common], help="Canard exit ordinate vs prediction")
    canard.add_argument(
        "--eps-list", type=float, nargs="+", default=list(DEFAULT_CANARD_EPSILONS)
    )
    canard.add_argument("--entry-k", type=float, default=1.0)
    canard.set_defaults(handler=cmd_canard)
