import math

import numpy as np
import pytest

from src.rhythm_engine.models import PsdResult, SpectralConfig
from src.rhythm_engine.spectral import (
    CompensatedSum,
    EmptyBandError,
    Signal,
    SpectralWindowError,
    averaged_psd,
    broadband_bin_count,
    peak_frequency,
    signal_channel,
    spectrogram,
    window_dft,
)


def _tone(freq_hz: float, t_end: float = 400.0, dt: float = 0.1) -> Signal:
    times = np.arange(int(round(t_end / dt)) + 1) * dt
    return Signal(times=times, values=np.sin(2 * math.pi * freq_hz * times / 1000.0))


def _short_cfg(**kw) -> SpectralConfig:
    return SpectralConfig(**{"t0": 0.0, "t1": 400.0, "shift": 1.0, **kw})


def test_window_dft_matches_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(16)
    n = x.shape[0]
    j = np.arange(n)
    oracle = np.array([np.sum(x * np.exp(-2j * np.pi * k * j / n)) / n for k in range(n)])
    assert np.max(np.abs(window_dft(x) - oracle)) < 1e-12


def test_window_dft_parseval():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(2000)
    coeffs = window_dft(x)
    assert np.sum(np.abs(coeffs) ** 2) == pytest.approx(np.mean(x**2), rel=1e-10)


def test_window_dft_rejects_empty_input():
    with pytest.raises(SpectralWindowError):
        window_dft(np.array([]))


def test_default_window_geometry():
    cfg = SpectralConfig()
    assert cfg.window_samples == 2000
    assert cfg.shift_samples == 1
    assert cfg.n_windows == 18001
    assert cfg.bin_spacing_hz == 5.0


def test_bin_aligned_tone_peaks_in_its_bin():
    cfg = _short_cfg()
    psd = averaged_psd(_tone(65.0), cfg)
    assert psd.n_windows == 201
    assert psd.n_bins == 2000
    assert peak_frequency(psd, (20.0, 120.0)) == 65.0

    k = 13
    in_bin = psd.power[k] + psd.power[psd.n_bins - k]
    assert in_bin / psd.power.sum() >= 0.99
    assert broadband_bin_count(psd, (20.0, 120.0)) == 1


def test_peak_ties_go_to_the_lower_bin():
    freqs = np.arange(8) * 5.0
    psd = PsdResult(freqs_hz=freqs, power=np.array([9.0, 1.0, 3.0, 3.0, 0.5, 0, 0, 0]),
                    n_windows=1)
    assert peak_frequency(psd, (0.0, 20.0)) == 10.0


def test_empty_band_raises():
    psd = averaged_psd(_tone(65.0), _short_cfg())
    with pytest.raises(EmptyBandError):
        peak_frequency(psd, (1.0, 2.0))


def test_signal_must_cover_the_windows():
    with pytest.raises(SpectralWindowError):
        averaged_psd(_tone(65.0, t_end=300.0), _short_cfg())


def test_signal_spacing_must_match_sample_dt():
    with pytest.raises(SpectralWindowError):
        averaged_psd(_tone(65.0, dt=0.2), _short_cfg())


def test_spectrogram_shape_and_mean():
    cfg = _short_cfg(shift=10.0)
    signal = _tone(40.0)
    spec = spectrogram(signal, cfg)
    assert spec.power.shape == (21, 1001)
    assert spec.window_starts_ms[1] == 10.0
    assert spec.freqs_hz[-1] == 5000.0

    psd = averaged_psd(signal, cfg)
    assert np.allclose(spec.mean_power(), psd.power[:1001], rtol=1e-14, atol=0.0)
    assert int(np.argmax(spec.power[5])) == 8


def test_spectrogram_mean_psd_matches_the_averaged_psd():
    cfg = _short_cfg(shift=10.0)
    signal = _tone(40.0)
    mean = spectrogram(signal, cfg).mean_psd()
    psd = averaged_psd(signal, cfg)
    assert mean.n_bins == psd.n_bins == 2000
    assert mean.n_windows == 21
    assert np.array_equal(mean.freqs_hz, psd.freqs_hz)
    assert np.allclose(mean.power, psd.power, rtol=1e-10, atol=1e-12 * psd.power.max())
    assert peak_frequency(mean, (20.0, 120.0)) == peak_frequency(psd, (20.0, 120.0)) == 40.0


def test_compensated_sum_recovers_small_terms():
    acc = CompensatedSum(1)
    for value in (1.0, 1e100, 1.0, -1e100):
        acc.add(np.array([value]))
    assert acc.mean()[0] == 0.5


def test_signal_channel_scales_u():
    class Path:
        times = np.array([0.0, 0.1])
        u = np.array([0.0, 0.01])
        v = np.array([0.2, 0.3])

    assert signal_channel(Path(), "v").values.tolist() == [0.2, 0.3]
    assert signal_channel(Path(), "u_bar").values[0] == pytest.approx(0.00672)
    assert signal_channel(Path(), "e_current").values[1] == pytest.approx(3.5 * 0.02632)
