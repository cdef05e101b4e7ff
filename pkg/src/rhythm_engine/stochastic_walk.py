"""
Random walk of the wandering coefficients (K, eps, gamma) and the stochastic simulation.

Every update_interval ms the coefficients move in the order K, eps, gamma:

    K     <- K (1 + K_step U1)       reflected to K (1 - K_step U1) when it leaves K_range
    eps   <- eps + eps_step U2       reflected to eps - eps_step U2 when it leaves eps_range
    gamma <- gamma + gamma_step U3   U3 redrawn until eps * gamma lies in f_range

with U1, U2, U3 uniform on [-1, 1], each from its own Philox stream.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import stats

from src.core.observability import OnceLogger
from src.rhythm_engine.integrator import (
    IntegrationBlowupError,
    SampledPath,
    apply_floor,
    default_start,
    rk4_update,
)
from src.rhythm_engine.model_core import field_rhs
from src.rhythm_engine.models import (
    IntegrationConfig,
    ModelParams,
    State,
    StochasticTrajectory,
    WalkConfig,
    steps_per,
)

logger = logging.getLogger(__name__)

E_SCALE = 1.96
E_OFFSET = 0.00672
CURRENT_RATIO = 3.5
GENERATOR = "numpy.random.Philox (4x64, 10 rounds), streams spawned from SeedSequence(seed)"


class RedrawExhaustedError(RuntimeError):
    def __init__(self, eps: float, interval: tuple[float, float], redraws: int, what: str = "gamma"):
        self.eps = eps
        self.interval = interval
        self.redraws = redraws
        self.what = what
        lo, hi = interval
        super().__init__(
            f"{what} redraw budget ({redraws}) exhausted at eps={eps:.6g}; "
            f"acceptance interval [{lo:.6g}, {hi:.6g}] is empty or unreachable"
        )

    def __reduce__(self):
        return type(self), (self.eps, self.interval, self.redraws, self.what)


class ZeroVarianceError(ValueError):
    pass


class UniformSource(Protocol):
    def next(self) -> float: ...


class UniformStream:
    """Uniform draws on [-1, 1) from one Philox stream, generated in blocks."""

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 4096):
        self._gen = np.random.Generator(np.random.Philox(seed_seq))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._gen.uniform(-1.0, 1.0, self._block)
            self._pos = 0
        x = float(self._buf[self._pos])
        self._pos += 1
        return x


@dataclass
class ParameterStreams:
    K: UniformSource
    eps: UniformSource
    gamma: UniformSource

    @classmethod
    def from_seed(cls, seed: int) -> ParameterStreams:
        k_ss, eps_ss, gamma_ss = np.random.SeedSequence(seed).spawn(3)
        return cls(K=UniformStream(k_ss), eps=UniformStream(eps_ss), gamma=UniformStream(gamma_ss))


@dataclass
class WalkCounters:
    K_clamps: OnceLogger = field(default_factory=lambda: OnceLogger(logger, "K clamp"))
    eps_clamps: OnceLogger = field(default_factory=lambda: OnceLogger(logger, "eps clamp"))
    eps_redraws: OnceLogger = field(default_factory=lambda: OnceLogger(logger, "eps redraw"))
    gamma_redraws: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "K_clamps": self.K_clamps.count,
            "eps_clamps": self.eps_clamps.count,
            "eps_redraws": self.eps_redraws.count,
            "gamma_redraws": self.gamma_redraws,
        }


def _reflect(
    value: float, candidate: float, reflected: float, bounds: tuple[float, float],
    clamp_log: OnceLogger | None, name: str,
) -> float:
    lo, hi = bounds
    if lo <= candidate <= hi:
        return candidate
    if lo <= reflected <= hi:
        return reflected
    clamped = min(max(reflected, lo), hi)
    if clamp_log is not None:
        clamp_log.hit("%s=%.6g: candidate %.6g and reflection %.6g both outside [%g, %g]",
                      name, value, candidate, reflected, lo, hi)
    else:
        logger.warning(f"{name}={value:.6g}: reflected step escaped [{lo}, {hi}], clamped")
    return clamped


def update_K(
    K: float, u_draw: float, cfg: WalkConfig, clamp_log: OnceLogger | None = None
) -> float:
    return _reflect(
        K,
        K * (1.0 + cfg.K_step * u_draw),
        K * (1.0 - cfg.K_step * u_draw),
        cfg.K_range,
        clamp_log,
        "K",
    )


def update_eps(
    eps: float, u_draw: float, cfg: WalkConfig, clamp_log: OnceLogger | None = None
) -> float:
    return _reflect(
        eps,
        eps + cfg.eps_step * u_draw,
        eps - cfg.eps_step * u_draw,
        cfg.eps_range,
        clamp_log,
        "eps",
    )


def gamma_window(gamma: float, eps: float, cfg: WalkConfig) -> tuple[float, float]:
    """Interval of gamma candidates that keep eps * gamma inside f_range."""
    f_lo, f_hi = cfg.f_range
    return max(gamma - cfg.gamma_step, f_lo / eps), min(gamma + cfg.gamma_step, f_hi / eps)


def gamma_acceptance(gamma: float, eps: float, cfg: WalkConfig) -> float:
    """Fraction of the gamma candidate span [gamma - step, gamma + step] that is accepted."""
    if cfg.gamma_step == 0:
        f_lo, f_hi = cfg.f_range
        return 1.0 if f_lo <= eps * gamma <= f_hi else 0.0
    lo, hi = gamma_window(gamma, eps, cfg)
    return max(hi - lo, 0.0) / (2.0 * cfg.gamma_step)


def update_gamma(
    gamma: float, eps: float, rng: UniformSource, cfg: WalkConfig
) -> tuple[float, int]:
    """Accepted gamma and the number of rejected draws before it."""
    f_lo, f_hi = cfg.f_range
    for attempt in range(cfg.max_redraws):
        candidate = gamma + cfg.gamma_step * rng.next()
        if f_lo <= eps * candidate <= f_hi:
            return candidate, attempt
    raise RedrawExhaustedError(eps, gamma_window(gamma, eps, cfg), cfg.max_redraws)


def update_eps_guarded(
    eps: float,
    gamma: float,
    rng: UniformSource,
    cfg: WalkConfig,
    counters: WalkCounters | None = None,
) -> float:
    """
    eps update whose draw is redrawn while the gamma acceptance fraction at the new eps is
    below min_gamma_acceptance. A threshold of 0 gives the plain reflected update.
    """
    counters = counters or WalkCounters()
    for _ in range(cfg.max_redraws):
        candidate = update_eps(eps, rng.next(), cfg, counters.eps_clamps)
        if cfg.min_gamma_acceptance == 0 or (
            gamma_acceptance(gamma, candidate, cfg) >= cfg.min_gamma_acceptance
        ):
            return candidate
        counters.eps_redraws.hit(
            "eps=%.6g -> %.6g leaves gamma=%.6g acceptance %.3g", eps, candidate, gamma,
            gamma_acceptance(gamma, candidate, cfg),
        )
    raise RedrawExhaustedError(eps, gamma_window(gamma, eps, cfg), cfg.max_redraws, what="eps")


def check_in_ranges(K: float, eps: float, gamma: float, cfg: WalkConfig) -> None:
    problems = []
    if not cfg.K_range[0] <= K <= cfg.K_range[1]:
        problems.append(f"K={K} outside {cfg.K_range}")
    if not cfg.eps_range[0] <= eps <= cfg.eps_range[1]:
        problems.append(f"eps={eps} outside {cfg.eps_range}")
    if not cfg.f_range[0] <= eps * gamma <= cfg.f_range[1]:
        problems.append(f"eps*gamma={eps * gamma} outside {cfg.f_range}")
    if problems:
        raise ValueError("initial walk parameters invalid: " + "; ".join(problems))


def simulate_stochastic(
    s0: State,
    K0: float,
    eps0: float,
    gamma0: float,
    walk: WalkConfig,
    icfg: IntegrationConfig,
    *,
    base: ModelParams | None = None,
    streams: ParameterStreams | None = None,
) -> StochasticTrajectory:
    """
    Integrate with (K, eps, gamma) piecewise constant between walk updates.

    A sample recorded at an update instant carries the coefficients chosen at that instant.
    The default step is min(0.01, eps_min/10) ms and must divide update_interval.
    """
    check_in_ranges(K0, eps0, gamma0, walk)
    fixed = base or ModelParams(K=K0, epsilon=eps0, gamma=gamma0)
    a1, a2, b, c = fixed.a1, fixed.a2, fixed.b, fixed.c

    dt = icfg.dt if icfg.dt is not None else min(0.01, walk.eps_range[0] / 10.0)
    per_update = steps_per(walk.update_interval, dt, what="update_interval")
    stride = icfg.resolve_stride(dt)
    n = icfg.n_steps(dt)
    n_rec = n // stride + 1

    streams = streams or ParameterStreams.from_seed(walk.seed)
    counters = WalkCounters()
    flooring = OnceLogger(logger, "state floor")

    times = np.arange(n_rec, dtype=float) * (stride * dt)
    us, vs = np.empty(n_rec), np.empty(n_rec)
    ks, es, gs = np.empty(n_rec), np.empty(n_rec), np.empty(n_rec)

    K, eps, gamma = K0, eps0, gamma0
    rhs = field_rhs(K, a1, a2, b, c, eps, gamma)
    u, v = s0.u, s0.v
    floor = icfg.state_floor
    rec = 0
    for i in range(n + 1):
        if i and i % per_update == 0:
            K = update_K(K, streams.K.next(), walk, counters.K_clamps)
            eps = update_eps_guarded(eps, gamma, streams.eps, walk, counters)
            gamma, rejected = update_gamma(gamma, eps, streams.gamma, walk)
            counters.gamma_redraws += rejected
            rhs = field_rhs(K, a1, a2, b, c, eps, gamma)
        if i % stride == 0:
            us[rec], vs[rec] = u, v
            ks[rec], es[rec], gs[rec] = K, eps, gamma
            rec += 1
        if i == n:
            break
        ru, rv = rk4_update(rhs, u, v, dt)
        if not (math.isfinite(ru) and math.isfinite(rv)):
            raise IntegrationBlowupError(i * dt, (u, v))
        u = apply_floor(ru, floor)
        v = apply_floor(rv, floor)
        if u != ru or v != rv:
            flooring.hit("clamped (%.3g, %.3g) at t=%.6g ms", ru, rv, (i + 1) * dt)

    for log in (flooring, counters.K_clamps, counters.eps_clamps, counters.eps_redraws):
        log.summarize()
    interventions = {"floored_steps": flooring.count, **counters.as_dict()}
    logger.info(f"Stochastic run seed={walk.seed}: {n} steps, interventions={interventions}")
    return StochasticTrajectory(
        times=times,
        u=us,
        v=vs,
        K_trace=ks,
        eps_trace=es,
        gamma_trace=gs,
        seed=walk.seed,
        dt=dt,
        interventions=interventions,
    )


def simulate_from_config(
    walk: WalkConfig, icfg: IntegrationConfig, base: ModelParams | None = None,
    s0: State | None = None,
) -> StochasticTrajectory:
    """Stochastic run from the range midpoints, starting next to their interior fixed point."""
    K0, eps0, gamma0 = walk.initial_values()
    start_params = (base or ModelParams(K=K0, epsilon=eps0)).with_(K=K0, epsilon=eps0, gamma=gamma0)
    return simulate_stochastic(
        s0 or default_start(start_params), K0, eps0, gamma0, walk, icfg, base=start_params
    )


@dataclass
class ConductanceTable:
    """Scaled outputs: u_bar = 1.96 u + 0.00672, e_current = 3.5 u_bar, and v."""

    t_ms: np.ndarray
    u_bar: np.ndarray
    e_current: np.ndarray
    v: np.ndarray

    columns = ("t_ms", "u_bar", "e_current_3p5", "v")

    def __len__(self) -> int:
        return int(self.t_ms.shape[0])

    def rows(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.t_ms.tolist(), self.u_bar.tolist(), self.e_current.tolist(),
                        self.v.tolist()))


def conductance_outputs(traj: SampledPath) -> ConductanceTable:
    u_bar = E_SCALE * np.asarray(traj.u) + E_OFFSET
    return ConductanceTable(
        t_ms=np.asarray(traj.times),
        u_bar=u_bar,
        e_current=CURRENT_RATIO * u_bar,
        v=np.asarray(traj.v),
    )


def ei_balance_correlation(
    traj: SampledPath, t_start: float = 500.0
) -> float:
    """Pearson correlation between 3.5 u_bar and v over samples with t >= t_start."""
    table = conductance_outputs(traj)
    mask = table.t_ms >= t_start - 1e-9
    x, y = table.e_current[mask], table.v[mask]
    if x.shape[0] < 2:
        raise ZeroVarianceError(f"need at least 2 samples after t={t_start} ms, got {x.shape[0]}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVarianceError("constant signal: correlation undefined")
    return float(stats.pearsonr(x, y).statistic)
