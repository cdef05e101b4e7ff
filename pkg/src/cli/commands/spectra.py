"""psd and spectrogram: read a trajectory CSV (a file, or stdin with --input -) or run the walk."""

from __future__ import annotations

import argparse
import logging

from src.cli.commands.stochastic import add_walk_flags
from src.cli.context import CommandContext
from src.rhythm_engine.spectral import (
    DEFAULT_SEARCH_BAND,
    EmptyBandError,
    Signal,
    averaged_psd,
    broadband_bin_count,
    peak_frequency,
    signal_channel,
    spectrogram,
)
from src.rhythm_engine.stochastic_walk import simulate_from_config
from src.rhythm_engine.storage.csv_store import (
    PSD_HEADER,
    SPECTROGRAM_HEADER,
    psd_rows,
    read_trajectory,
    spectrogram_rows,
)
from src.rhythm_engine.sweeps import ensemble_icfg

logger = logging.getLogger(__name__)


def load_signal(ctx: CommandContext) -> Signal:
    cfg = ctx.config
    source = ctx.args.input
    if source is not None:
        with ctx.stage("read_input"):
            traj = read_trajectory(source)
        logger.info(f"Read {traj.times.shape[0]} samples from {source}")
    else:
        ctx.seed = cfg.walk.seed
        with ctx.stage("simulate_stochastic"):
            traj = simulate_from_config(
                cfg.walk, ensemble_icfg(cfg.integration, cfg.spectral), ctx.walk_base()
            )
    return signal_channel(traj, cfg.spectral.channel)


def cmd_psd(ctx: CommandContext) -> int:
    signal = load_signal(ctx)
    lo, hi = ctx.args.band
    with ctx.stage("averaged_psd"):
        psd = averaged_psd(signal, ctx.config.spectral)
        peak = peak_frequency(psd, (lo, hi))
        broad = broadband_bin_count(psd, (lo, hi))
    if ctx.output_path:
        ctx.emit_rows(PSD_HEADER, psd_rows(psd), tabular=False)
    ctx.headline = {"peak_hz": peak, "band_hz": [lo, hi], "broadband_bins": broad,
                    "windows": psd.n_windows}
    ctx.say(f"peak_hz={peak:g} band=[{lo:g}, {hi:g}]")
    ctx.say(f"windows={psd.n_windows} bins_above_half_peak={broad}")
    return 0


def cmd_spectrogram(ctx: CommandContext) -> int:
    signal = load_signal(ctx)
    lo, hi = ctx.args.band
    with ctx.stage("spectrogram"):
        spec = spectrogram(signal, ctx.config.spectral)
    ctx.emit_rows(SPECTROGRAM_HEADER, spectrogram_rows(spec), tabular=False)

    windows = len(spec.power)
    mean = spec.mean_psd()
    try:
        peak = peak_frequency(mean, (lo, hi))
    except EmptyBandError as exc:
        logger.info(f"No mean peak reported: {exc}")
        ctx.headline = {"windows": windows}
        ctx.say(f"windows={windows}")
        return 0
    ctx.headline = {"windows": windows, "mean_peak_hz": peak}
    ctx.say(f"windows={windows} mean_peak_hz={peak:g} band=[{lo:g}, {hi:g}]")
    return 0


def _add_spectral_flags(parser: argparse.ArgumentParser) -> None:
    add_walk_flags(parser)
    parser.add_argument(
        "--input", default=None, help="Trajectory CSV (t_ms,u,v,...); '-' for stdin"
    )
    parser.add_argument(
        "--band", type=float, nargs=2, metavar=("LO", "HI"), default=list(DEFAULT_SEARCH_BAND)
    )


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    psd = sub.add_parser("psd", parents=[common], help="Averaged PSD and its peak frequency")
    _add_spectral_flags(psd)
    psd.set_defaults(handler=cmd_psd)

    spec = sub.add_parser("spectrogram", parents=[common], help="Per-window power, long form")
    _add_spectral_flags(spec)
    spec.set_defaults(handler=cmd_spectrogram)
