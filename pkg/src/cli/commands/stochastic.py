"""The stochastic subcommand: one seeded walk run, or a seed ensemble with --seeds N."""

from __future__ import annotations

import argparse
import logging

from src.cli.context import CommandContext
from src.rhythm_engine.spectral import DEFAULT_SEARCH_BAND
from src.rhythm_engine.stochastic_walk import (
    ZeroVarianceError,
    conductance_outputs,
    ei_balance_correlation,
    simulate_from_config,
)
from src.rhythm_engine.storage.csv_store import (
    ENSEMBLE_HEADER,
    STOCHASTIC_HEADER,
    ensemble_rows,
    stochastic_rows,
    write_conductance,
)
from src.rhythm_engine.sweeps import ensemble_icfg, run_seed_ensemble

logger = logging.getLogger(__name__)


def _run_ensemble(ctx: CommandContext, n_seeds: int) -> int:
    cfg = ctx.config
    first = cfg.walk.seed
    seeds = list(range(first, first + n_seeds))
    icfg = ensemble_icfg(cfg.integration, cfg.spectral)
    band = tuple(ctx.args.band)
    with ctx.stage("seed_ensemble"):
        rows = run_seed_ensemble(
            seeds, cfg.walk, icfg, cfg.spectral, band=band, base=ctx.walk_base()
        )
    ctx.emit_rows(ENSEMBLE_HEADER, ensemble_rows(rows))

    lo, hi = 40.0, 90.0
    in_gamma = sum(1 for r in rows if lo <= r.peak_hz <= hi)
    min_corr = min(r.ei_correlation for r in rows)
    min_broad = min(r.broadband_bins for r in rows)
    ctx.headline = {
        "seeds": seeds,
        "peaks_in_40_90_hz": in_gamma,
        "min_broadband_bins": min_broad,
        "min_ei_correlation": min_corr,
    }
    ctx.say(
        f"seeds={len(rows)} peaks_in_[40, 90]={in_gamma} min_broadband_bins={min_broad} "
        f"min_ei_correlation={min_corr:.4f}"
    )
    return 0


def cmd_stochastic(ctx: CommandContext) -> int:
    args = ctx.args
    cfg = ctx.config
    ctx.seed = cfg.walk.seed
    if args.seeds > 1:
        return _run_ensemble(ctx, args.seeds)

    # record on the spectral sampling grid so the CSV can be piped into psd
    icfg = cfg.integration
    if icfg.record_dt is None:
        icfg = icfg.model_copy(update={"record_dt": cfg.spectral.sample_dt})
    with ctx.stage("simulate_stochastic"):
        traj = simulate_from_config(cfg.walk, icfg, ctx.walk_base())
    ctx.emit_rows(STOCHASTIC_HEADER, stochastic_rows(traj), tabular=False)
    if args.conductance:
        with ctx.stage("write_conductance"):
            write_conductance(args.conductance, conductance_outputs(traj).rows())
        ctx.record_output(args.conductance)

    ctx.headline = {"seed": traj.seed, "samples": len(traj.times), **traj.interventions}
    try:
        corr = ei_balance_correlation(traj, t_start=cfg.spectral.t0)
    except ZeroVarianceError as exc:
        logger.info(f"E/I correlation not reported: {exc}")
        corr = None
    if corr is not None:
        ctx.headline["ei_correlation"] = corr
    shown = "n/a" if corr is None else f"{corr:.4f}"
    ctx.say(f"seed={traj.seed} samples={len(traj.times)} ei_correlation={shown}")
    return 0


def add_walk_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--walk-preset",
        dest="walk_preset",
        choices=["broad_k", "narrow_k"],
        default=None,
        help="K range preset: broad_k = [30, 100], narrow_k = [30, 50]",
    )


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = sub.add_parser(
        "stochastic", parents=[common], help="Random-walk coefficients run (CSV to stdout or -o)"
    )
    add_walk_flags(parser)
    parser.add_argument("--seeds", type=int, default=1, help="Run N seeds starting at --seed")
    parser.add_argument("--conductance", default=None, help="Also write t_ms,u_bar,e_current_3p5,v")
    parser.add_argument(
        "--band",
        type=float,
        nargs=2,
        metavar=("LO", "HI"),
        default=list(DEFAULT_SEARCH_BAND),
        help="Peak search band in Hz for --seeds",
    )
    parser.set_defaults(handler=cmd_stochastic)
