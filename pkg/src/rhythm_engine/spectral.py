"""
Windowed Fourier analysis: per-window DFT, averaged PSD over sliding windows, spectrogram.

Windows are rectangular. With time in ms, bin k sits at 1000 k / T_window Hz.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.rhythm_engine.integrator import SampledPath
from src.rhythm_engine.models import Channel, PsdResult, SpectralConfig, Spectrogram
from src.rhythm_engine.stochastic_walk import conductance_outputs

logger = logging.getLogger(__name__)

WINDOW_CHUNK = 256
DEFAULT_SEARCH_BAND = (20.0, 120.0)


class SpectralWindowError(ValueError):
    pass


class EmptyBandError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    times: np.ndarray
    values: np.ndarray
    name: str = "v"


def signal_channel(traj: SampledPath, channel: Channel = "v") -> Signal:
    """v, u, u_bar (1.96 u + 0.00672) or e_current (3.5 u_bar) as a sampled signal."""
    if channel == "v":
        values = np.asarray(traj.v)
    elif channel == "u":
        values = np.asarray(traj.u)
    else:
        table = conductance_outputs(traj)
        values = table.u_bar if channel == "u_bar" else table.e_current
    return Signal(times=np.asarray(traj.times), values=values, name=channel)


def window_dft(samples: np.ndarray) -> np.ndarray:
    """f_hat(k) = (1/N) sum_j x_j exp(-2 pi i k j / N), k = 0..N-1."""
    x = np.asarray(samples)
    if x.ndim != 1 or x.shape[0] == 0:
        raise SpectralWindowError("window_dft needs a non-empty 1-D sequence")
    return np.fft.fft(x) / x.shape[0]


class CompensatedSum:
    """Neumaier summation of equal-length rows, in the order they are added."""

    def __init__(self, n: int):
        self.total = np.zeros(n)
        self.comp = np.zeros(n)
        self.count = 0

    def add(self, row: np.ndarray) -> None:
        t = self.total + row
        big = np.abs(self.total) >= np.abs(row)
        self.comp += np.where(big, (self.total - t) + row, (row - t) + self.total)
        self.total = t
        self.count += 1

    def mean(self) -> np.ndarray:
        return (self.total + self.comp) / self.count


def compensated_row_mean(matrix: np.ndarray) -> np.ndarray:
    acc = CompensatedSum(matrix.shape[1])
    for row in matrix:
        acc.add(row)
    return acc.mean()


def _window_block(signal: Signal, cfg: SpectralConfig) -> np.ndarray:
    """(n_windows, N) strided view of the analysis windows."""
    n = cfg.window_samples
    shift = cfg.shift_samples
    n_windows = cfg.n_windows
    times = signal.times
    if times.shape[0] < 2:
        raise SpectralWindowError("signal has fewer than two samples")

    spacing = float(times[1] - times[0])
    if abs(spacing - cfg.sample_dt) > 1e-9 * max(1.0, cfg.sample_dt):
        raise SpectralWindowError(
            f"signal sampled every {spacing:.6g} ms but sample_dt={cfg.sample_dt}"
        )
    start = int(round((cfg.t0 - times[0]) / cfg.sample_dt))
    if start < 0:
        raise SpectralWindowError(f"signal starts at {times[0]} ms, after t0={cfg.t0}")
    needed = start + (n_windows - 1) * shift + n
    if needed > times.shape[0]:
        raise SpectralWindowError(
            f"window of {cfg.T_window} ms over [{cfg.t0}, {cfg.t1}] needs {needed} samples; "
            f"signal has {times.shape[0]}"
        )
    view = sliding_window_view(signal.values[start:needed], n)
    return view[::shift][:n_windows]


def _power_chunks(signal: Signal, cfg: SpectralConfig) -> Iterator[np.ndarray]:
    windows = _window_block(signal, cfg)
    n = cfg.window_samples
    for lo in range(0, windows.shape[0], WINDOW_CHUNK):
        coeffs = np.fft.fft(windows[lo : lo + WINDOW_CHUNK], axis=1) / n
        yield coeffs.real**2 + coeffs.imag**2


def averaged_psd(signal: Signal, cfg: SpectralConfig) -> PsdResult:
    """Mean |f_hat(k)|^2 over all windows starting at t0, t0 + shift, ... with end <= t1."""
    n = cfg.window_samples
    acc = CompensatedSum(n)
    for chunk in _power_chunks(signal, cfg):
        for row in chunk:
            acc.add(row)
    logger.debug(f"Averaged {acc.count} windows of {n} samples")
    return PsdResult(
        freqs_hz=np.arange(n) * cfg.bin_spacing_hz, power=acc.mean(), n_windows=acc.count
    )


def spectrogram(signal: Signal, cfg: SpectralConfig) -> Spectrogram:
    """Per-window power for bins 0..N/2."""
    n = cfg.window_samples
    half = n // 2 + 1
    power = np.empty((cfg.n_windows, half))
    row = 0
    for chunk in _power_chunks(signal, cfg):
        power[row : row + chunk.shape[0]] = chunk[:, :half]
        row += chunk.shape[0]
    starts = cfg.t0 + np.arange(cfg.n_windows) * cfg.shift
    return Spectrogram(
        window_starts_ms=starts, freqs_hz=np.arange(half) * cfg.bin_spacing_hz, power=power
    )


def _band_bins(psd: PsdResult, band_hz: tuple[float, float] | None) -> np.ndarray:
    n = psd.n_bins
    k = np.arange(1, n // 2 + 1)
    if band_hz is not None:
        lo, hi = band_hz
        f = psd.freqs_hz[k]
        k = k[(f >= lo - 1e-9) & (f <= hi + 1e-9)]
    if k.size == 0:
        raise EmptyBandError(f"band {band_hz} Hz holds no bins in (0, Nyquist]")
    return k


def peak_frequency(psd: PsdResult, band_hz: tuple[float, float]) -> float:
    """Frequency of the strongest bin in the band (bin 0 excluded); ties go to the lower one."""
    k = _band_bins(psd, band_hz)
    return float(psd.freqs_hz[k[int(np.argmax(psd.power[k]))]])


def broadband_bin_count(psd: PsdResult, band_hz: tuple[float, float] | None = None) -> int:
    """Bins in the band carrying at least half the band's peak power."""
    k = _band_bins(psd, band_hz)
    power = psd.power[k]
    return int(np.count_nonzero(power >= 0.5 * power.max()))
