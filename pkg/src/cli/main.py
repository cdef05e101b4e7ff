"""
gamma-rhythm command line.

Exit codes:
    0  success
    1  unexpected error
    2  usage or configuration error (bad flag, unknown config key, missing model.K)
    3  file I/O or malformed CSV input
    4  invalid model parameters
    5  integration blow-up
    6  no oscillation / section never crossed
    7  walk redraw budget exhausted
    8  spectral window or band error

Configuration precedence, weakest first: field defaults, --config file,
GAMMA_RHYTHM_<SECTION>__<FIELD> environment variables, --<section>.<field> flags.
"""

from __future__ import annotations

import argparse
import logging
import sys

from pydantic import ValidationError

from src import __version__
from src.cli.commands import analysis, spectra, stochastic
from src.cli.context import CommandContext, add_common_flags, collect_overrides
from src.core.config import ConfigFileError, MissingParameterError, load_run_config
from src.core.monitoring import RunMetrics, StageTracker
from src.core.observability import configure_logging
from src.core.run_context import new_run_id, run_scope
from src.rhythm_engine.integrator import (
    IntegrationBlowupError,
    NoCrossingError,
    NotOscillatingError,
)
from src.rhythm_engine.models import InvalidParametersError
from src.rhythm_engine.spectral import EmptyBandError, SpectralWindowError
from src.rhythm_engine.stochastic_walk import RedrawExhaustedError
from src.rhythm_engine.storage.csv_store import CsvFormatError

logger = logging.getLogger(__name__)

# First match wins.
EXIT_CODES: tuple[tuple[tuple[type[BaseException], ...], int], ...] = (
    ((MissingParameterError, ConfigFileError, ValidationError), 2),
    ((OSError, CsvFormatError), 3),
    ((InvalidParametersError,), 4),
    ((IntegrationBlowupError,), 5),
    ((NotOscillatingError, NoCrossingError), 6),
    ((RedrawExhaustedError,), 7),
    ((SpectralWindowError, EmptyBandError), 8),
)


def exit_code_for(exc: BaseException) -> int:
    for kinds, code in EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    add_common_flags(common)

    parser = argparse.ArgumentParser(
        prog="gamma-rhythm",
        description="Conductance-model simulations, bifurcation checks and spectra.",
        epilog="Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 params, 5 blow-up, "
        "6 no oscillation/crossing, 7 redraws exhausted, 8 spectral, 1 other.",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    analysis.register(sub, common)
    stochastic.register(sub, common)
    spectra.register(sub, common)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    metrics = RunMetrics(args.command)
    run_id = new_run_id()
    with run_scope(run_id):
        try:
            with StageTracker(metrics, "load_config"):
                config = load_run_config(args.config, collect_overrides(args))
            ctx = CommandContext(
                command=args.command, args=args, config=config, metrics=metrics, run_id=run_id
            )
            code = args.handler(ctx)
            ctx.save_manifest()
        except Exception as exc:
            code = exit_code_for(exc)
            stage = metrics.failed_stage() or "setup"
            if code == 1:
                logger.exception(f"Unexpected failure in stage {stage}")
            print(f"gamma-rhythm {args.command}: {stage} failed: {exc}", file=sys.stderr)
            return code
    logger.info(f"{args.command} finished in {metrics.wall_time():.3f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
