"""Parameter-grid sweeps and multi-seed ensembles on a bounded process pool."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

from src.core.config import get_settings
from src.rhythm_engine.integrator import AttractorSummary, summarize_attractor
from src.rhythm_engine.models import IntegrationConfig, ModelParams, SpectralConfig, WalkConfig
from src.rhythm_engine.spectral import (
    DEFAULT_SEARCH_BAND,
    averaged_psd,
    broadband_bin_count,
    peak_frequency,
    signal_channel,
)
from src.rhythm_engine.stochastic_walk import ei_balance_correlation, simulate_from_config

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRID = (0.1, 0.2, 0.3, 0.4)
DEFAULT_K_GRID = (30.0, 50.0, 70.0, 90.0)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], max_workers: int | None = None) -> list[R]:
    """Map over items, in parallel when more than one worker is allowed; input order is kept."""
    work = list(items)
    workers = max_workers if max_workers is not None else get_settings().max_workers
    workers = max(1, min(workers, len(work) or 1))
    if workers == 1:
        return [fn(item) for item in work]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, work))


@dataclass(frozen=True)
class SweepRow:
    K: float
    eps: float
    gamma: float
    summary: AttractorSummary


def _sweep_cell(args: tuple[ModelParams, IntegrationConfig]) -> SweepRow:
    p, cfg = args
    return SweepRow(K=p.K, eps=p.epsilon, gamma=p.gamma, summary=summarize_attractor(p, cfg))


def sweep_grid(
    base: ModelParams,
    cfg: IntegrationConfig,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    K_grid: Sequence[float] = DEFAULT_K_GRID,
    max_workers: int | None = None,
) -> list[SweepRow]:
    """Attractor summary for every (eps, K) cell, eps-major then K."""
    cells = [(base.with_(K=K, epsilon=eps), cfg) for eps in eps_grid for K in K_grid]
    logger.info(f"Sweeping {len(cells)} cells")
    return ordered_map(_sweep_cell, cells, max_workers)


@dataclass(frozen=True)
class EnsembleRow:
    seed: int
    peak_hz: float
    broadband_bins: int
    ei_correlation: float
    interventions: dict[str, int]


@dataclass(frozen=True)
class _EnsembleJob:
    seed: int
    walk: WalkConfig
    icfg: IntegrationConfig
    scfg: SpectralConfig
    band: tuple[float, float]
    base: ModelParams | None


def _ensemble_member(job: _EnsembleJob) -> EnsembleRow:
    walk = job.walk.model_copy(update={"seed": job.seed})
    traj = simulate_from_config(walk, job.icfg, job.base)
    psd = averaged_psd(signal_channel(traj, job.scfg.channel), job.scfg)
    return EnsembleRow(
        seed=job.seed,
        peak_hz=peak_frequency(psd, job.band),
        broadband_bins=broadband_bin_count(psd, job.band),
        ei_correlation=ei_balance_correlation(traj, t_start=job.scfg.t0),
        interventions=traj.interventions,
    )


def run_seed_ensemble(
    seeds: Sequence[int],
    walk: WalkConfig,
    icfg: IntegrationConfig,
    scfg: SpectralConfig,
    band: tuple[float, float] = DEFAULT_SEARCH_BAND,
    base: ModelParams | None = None,
    max_workers: int | None = None,
) -> list[EnsembleRow]:
    """One stochastic run per seed; rows come back in seed order as given."""
    jobs = [_EnsembleJob(s, walk, icfg, scfg, band, base) for s in seeds]
    return ordered_map(_ensemble_member, jobs, max_workers)


def ensemble_icfg(icfg: IntegrationConfig, scfg: SpectralConfig) -> IntegrationConfig:
    """Integration settings whose recording grid matches the spectral sampling."""
    updates: dict[str, object] = {}
    if icfg.record_dt is None:
        updates["record_dt"] = scfg.sample_dt
    if icfg.t_end < scfg.t1:
        updates["t_end"] = scfg.t1
    return icfg.model_copy(update=updates) if updates else icfg
