"""CSV writers/readers for every run artifact. Floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import logging
import sys
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any

import numpy as np

from src.rhythm_engine.models import (
    FixedPoint,
    PsdResult,
    Spectrogram,
    StochasticTrajectory,
    Trajectory,
)

if TYPE_CHECKING:
    from src.rhythm_engine.sweeps import EnsembleRow

logger = logging.getLogger(__name__)

STDIO = "-"

TRAJECTORY_HEADER = ("t_ms", "u", "v")
STOCHASTIC_HEADER = ("t_ms", "u", "v", "K", "eps", "gamma")
CONDUCTANCE_HEADER = ("t_ms", "u_bar", "e_current_3p5", "v")
PSD_HEADER = ("freq_hz", "power")
SPECTROGRAM_HEADER = ("window_start_ms", "freq_hz", "power")
CANARD_HEADER = ("epsilon", "k", "y_bar", "prediction", "abs_error")
HOPF_HEADER = ("K", "eps_H")
SWEEP_HEADER = ("K", "eps", "gamma", "kind", "period_ms", "u_min", "u_max", "v_min", "v_max")
FIXED_POINTS_HEADER = ("u", "v", "kind", "re_l1", "im_l1", "re_l2", "im_l2")
ENSEMBLE_HEADER = ("seed", "peak_hz", "broadband_bins", "ei_correlation")


class CsvFormatError(ValueError):
    pass


def fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(getattr(value, "value", value))


@contextmanager
def _open_out(path: str | Path) -> Iterator[IO[str]]:
    if str(path) == STDIO:
        yield sys.stdout
        sys.stdout.flush()
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        yield f


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write header + rows; returns the number of data rows."""
    count = 0
    with _open_out(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return count


def read_columns(source: str | Path | IO[str]) -> dict[str, np.ndarray]:
    """Numeric columns of a CSV (from a path, `-` for stdin, or an open stream)."""
    if isinstance(source, (str, Path)):
        if str(source) == STDIO:
            return read_columns(sys.stdin)
        with Path(source).open(newline="", encoding="utf-8") as f:
            return read_columns(f)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration as exc:
        raise CsvFormatError("empty CSV input") from exc
    cols: list[list[float]] = [[] for _ in header]
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            for col, cell in zip(cols, row):
                col.append(float(cell))
        except ValueError as exc:
            raise CsvFormatError(f"line {lineno}: {exc}") from exc
    return {name: np.asarray(col) for name, col in zip(header, cols)}


def trajectory_rows(traj: Trajectory) -> Iterator[tuple[float, float, float]]:
    return zip(traj.times, traj.u, traj.v)


def stochastic_rows(traj: StochasticTrajectory) -> Iterator[tuple[float, ...]]:
    return zip(traj.times, traj.u, traj.v, traj.K_trace, traj.eps_trace, traj.gamma_trace)


def write_conductance(path: str | Path, rows: Iterable[Sequence[float]]) -> int:
    return write_rows(path, CONDUCTANCE_HEADER, rows)


def psd_rows(psd: PsdResult) -> Iterator[tuple[float, float]]:
    return zip(psd.freqs_hz, psd.power)


def spectrogram_rows(spec: Spectrogram) -> Iterator[tuple[float, float, float]]:
    """Long form: one row per (window, bin)."""
    for start, powers in zip(spec.window_starts_ms, spec.power):
        for freq, power in zip(spec.freqs_hz, powers):
            yield start, freq, power


def ensemble_rows(rows: Iterable[EnsembleRow]) -> list[tuple[Any, ...]]:
    return [(r.seed, r.peak_hz, r.broadband_bins, r.ei_correlation) for r in rows]


def fixed_point_rows(points: Iterable[FixedPoint]) -> list[tuple[Any, ...]]:
    return [
        (
            fp.location.u,
            fp.location.v,
            fp.kind,
            fp.eigenvalues[0].real,
            fp.eigenvalues[0].imag,
            fp.eigenvalues[1].real,
            fp.eigenvalues[1].imag,
        )
        for fp in points
    ]


@dataclass(frozen=True)
class RecordedPath:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray


def read_trajectory(source: str | Path | IO[str]) -> RecordedPath:
    """t_ms, u, v columns of a trajectory or stochastic CSV."""
    cols = read_columns(source)
    missing = [c for c in TRAJECTORY_HEADER if c not in cols]
    if missing:
        raise CsvFormatError(f"input lacks column(s) {missing}")
    return RecordedPath(times=cols["t_ms"], u=cols["u"], v=cols["v"])
