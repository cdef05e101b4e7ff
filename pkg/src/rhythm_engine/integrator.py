"""
Fixed-step RK4 integration of the conductance system, crossing detection, period
measurement, attractor classification, and the boundedness/closeness harnesses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol

import numpy as np

from src.core.observability import OnceLogger
from src.rhythm_engine.model_core import (
    Rhs,
    hopf_epsilon,
    interior_fixed_point,
    make_rhs,
    orbit_polyline_distance,
)
from src.rhythm_engine.models import (
    Direction,
    Event,
    EventSpec,
    IntegrationConfig,
    ModelParams,
    SingularOrbit,
    State,
    Trajectory,
)

logger = logging.getLogger(__name__)

DEFAULT_PERIOD_CROSSINGS = 10
SINK_AMPLITUDE = 1e-6


class IntegrationBlowupError(RuntimeError):
    def __init__(self, t: float, state: tuple[float, float], message: str | None = None):
        self.t = t
        self.state = state
        super().__init__(message or f"non-finite state after t={t:.6g} ms from {state}")

    def __reduce__(self):
        return type(self), (self.t, self.state, str(self))


class NotOscillatingError(RuntimeError):
    pass


class NoCrossingError(RuntimeError):
    pass


class SampledPath(Protocol):
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class StepResult:
    state: State
    raw_u: float
    raw_v: float
    floored: bool


def rk4_update(rhs: Rhs, u: Any, v: Any, dt: float) -> tuple[Any, Any]:
    """One classical RK4 step of rhs; u, v may be floats or numpy arrays. No flooring."""
    k1u, k1v = rhs(u, v)
    h = 0.5 * dt
    k2u, k2v = rhs(u + h * k1u, v + h * k1v)
    k3u, k3v = rhs(u + h * k2u, v + h * k2v)
    k4u, k4v = rhs(u + dt * k3u, v + dt * k3v)
    return (
        u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )


def apply_floor(x: float, floor: float) -> float:
    # Exact zeros stay put: the axes are invariant lines.
    if x < floor and x != 0.0:
        return floor
    return x


def advance(
    u: float, v: float, dt: float, p: ModelParams, floor: float
) -> tuple[float, float, float, float]:
    """One RK4 step on plain floats: (u, v, raw_u, raw_v)."""
    ru, rv = rk4_update(make_rhs(p), u, v, dt)
    return apply_floor(ru, floor), apply_floor(rv, floor), ru, rv


def rk4_step(
    s: State, p: ModelParams, dt: float, state_floor: float = 1e-12, t: float = 0.0
) -> StepResult:
    """Classical RK4 update; components that drop below state_floor are clamped to it."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    nu, nv, ru, rv = advance(s.u, s.v, dt, p, state_floor)
    if not (math.isfinite(ru) and math.isfinite(rv)):
        raise IntegrationBlowupError(t, s.as_tuple())
    return StepResult(State(nu, nv), ru, rv, floored=(nu != ru or nv != rv))


def integrate(s0: State, p: ModelParams, cfg: IntegrationConfig) -> Trajectory:
    """RK4 from s0 over [0, t_end], keeping every record_stride-th step (step 0 included)."""
    dt = cfg.resolve_dt(p.epsilon)
    stride = cfg.resolve_stride(dt)
    n = cfg.n_steps(dt)
    n_rec = n // stride + 1

    times = np.arange(n_rec, dtype=float) * (stride * dt)
    us = np.empty(n_rec)
    vs = np.empty(n_rec)
    us[0], vs[0] = s0.u, s0.v

    flooring = OnceLogger(logger, "state floor")
    rhs = make_rhs(p)
    floor = cfg.state_floor
    u, v = s0.u, s0.v
    rec = 1
    for i in range(1, n + 1):
        ru, rv = rk4_update(rhs, u, v, dt)
        if not (math.isfinite(ru) and math.isfinite(rv)):
            raise IntegrationBlowupError((i - 1) * dt, (u, v))
        u = apply_floor(ru, floor)
        v = apply_floor(rv, floor)
        if u != ru or v != rv:
            flooring.hit("clamped (%.3g, %.3g) at t=%.6g ms", ru, rv, i * dt)
        if i % stride == 0:
            us[rec] = u
            vs[rec] = v
            rec += 1
    flooring.summarize()

    logger.debug(f"Integrated {n} steps of dt={dt} for K={p.K}, eps={p.epsilon}, gamma={p.gamma}")
    return Trajectory(times=times, u=us, v=vs, params_used=p, dt=dt, floored_steps=flooring.count)


def detect_events(path: SampledPath, spec: EventSpec) -> list[Event]:
    """Crossings of the section between consecutive samples, linearly interpolated."""
    series = path.u if spec.variable == "u" else path.v
    x = np.asarray(series, dtype=float) - spec.value
    if x.shape[0] < 2:
        return []

    prev, cur = x[:-1], x[1:]
    up = (prev < 0.0) & (cur >= 0.0)
    down = (prev > 0.0) & (cur <= 0.0)
    if spec.direction is Direction.UP:
        hits = up
    elif spec.direction is Direction.DOWN:
        hits = down
    else:
        hits = up | down

    events = []
    for i in np.flatnonzero(hits):
        frac = float(-prev[i] / (cur[i] - prev[i]))
        t = float(path.times[i] + frac * (path.times[i + 1] - path.times[i]))
        u = float(path.u[i] + frac * (path.u[i + 1] - path.u[i]))
        v = float(path.v[i] + frac * (path.v[i + 1] - path.v[i]))
        events.append(Event(t=t, state=State(max(u, 0.0), max(v, 0.0))))
    return events


def integrate_until(
    s0: State, p: ModelParams, cfg: IntegrationConfig, spec: EventSpec
) -> Event:
    """Integrate from s0 until the first crossing of the section, within t_end."""
    dt = cfg.resolve_dt(p.epsilon)
    n = cfg.n_steps(dt)
    floor = cfg.state_floor
    rhs = make_rhs(p)
    use_u = spec.variable == "u"
    u, v = s0.u, s0.v
    prev = (u if use_u else v) - spec.value
    for i in range(1, n + 1):
        ru, rv = rk4_update(rhs, u, v, dt)
        if not (math.isfinite(ru) and math.isfinite(rv)):
            raise IntegrationBlowupError((i - 1) * dt, (u, v))
        nu, nv = apply_floor(ru, floor), apply_floor(rv, floor)
        cur = (nu if use_u else nv) - spec.value
        if spec.crossed(prev, cur):
            frac = -prev / (cur - prev)
            return Event(
                t=(i - 1 + frac) * dt,
                state=State(u + frac * (nu - u), v + frac * (nv - v)),
            )
        u, v, prev = nu, nv, cur
    raise NoCrossingError(
        f"no {spec.direction.value}-crossing of {spec.variable}={spec.value} "
        f"within t_end={cfg.t_end} ms"
    )


def default_start(p: ModelParams) -> State:
    """Slightly off the interior fixed point, so the trajectory leaves it when it is a source."""
    fp = interior_fixed_point(p)
    return State(1.01 * fp.u, fp.v)


def _period_from_events(events: list[Event], m: int) -> float | None:
    if len(events) < m + 1:
        return None
    times = np.array([e.t for e in events[-(m + 1):]])
    return float(np.mean(np.diff(times)))


def limit_cycle_period(
    p: ModelParams,
    cfg: IntegrationConfig,
    m: int = DEFAULT_PERIOD_CROSSINGS,
    s0: State | None = None,
) -> float:
    """Mean spacing of the last m up-crossings of v = v* after the transient, in ms."""
    eps_h = hopf_epsilon(p.K, p)
    if p.epsilon * p.gamma >= eps_h:
        raise NotOscillatingError(
            f"eps*gamma={p.epsilon * p.gamma:.6g} >= eps_H={eps_h:.6g} for K={p.K}: "
            "the interior fixed point is a sink"
        )
    traj = integrate(s0 or default_start(p), p, cfg)
    v_star = interior_fixed_point(p).v
    events = detect_events(traj.after(cfg.transient_discard), EventSpec.v_crosses(v_star))
    period = _period_from_events(events, m)
    if period is None:
        raise NotOscillatingError(
            f"only {len(events)} crossings of v=v* after {cfg.transient_discard} ms; "
            f"need {m + 1}"
        )
    return period


class AttractorKind(str, Enum):
    SINK = "sink"
    LIMIT_CYCLE = "limit_cycle"


@dataclass(frozen=True)
class AttractorSummary:
    kind: AttractorKind
    period_ms: float | None
    u_min: float
    u_max: float
    v_min: float
    v_max: float


def _kind_of(traj: Trajectory) -> AttractorKind:
    tail = traj.u[int(0.75 * (len(traj) - 1)):]
    if tail.size == 0 or float(np.ptp(tail)) < SINK_AMPLITUDE:
        return AttractorKind.SINK
    return AttractorKind.LIMIT_CYCLE


def classify_attractor(
    p: ModelParams, cfg: IntegrationConfig, s0: State | None = None
) -> AttractorKind:
    """Sink when the peak-to-peak of u over the final quarter of the run is below 1e-6."""
    return _kind_of(integrate(s0 or default_start(p), p, cfg))


def summarize_attractor(
    p: ModelParams, cfg: IntegrationConfig, s0: State | None = None, m: int = 3
) -> AttractorSummary:
    """Attractor kind, post-transient extrema and (when oscillating) the period."""
    traj = integrate(s0 or default_start(p), p, cfg)
    kind = _kind_of(traj)
    tail = traj.after(cfg.transient_discard)
    period = None
    if kind is AttractorKind.LIMIT_CYCLE:
        v_star = interior_fixed_point(p).v
        period = _period_from_events(detect_events(tail, EventSpec.v_crosses(v_star)), m)
    return AttractorSummary(
        kind=kind,
        period_ms=period,
        u_min=float(tail.u.min()),
        u_max=float(tail.u.max()),
        v_min=float(tail.v.min()),
        v_max=float(tail.v.max()),
    )


def exit_ordinate(traj: Trajectory, u_level: float | None = None, t_from: float = 0.0) -> float:
    """
    Mean v at which the trajectory leaves the u ~ 0 branch (point C of the singular orbit),
    taken at upward crossings of u = u_level (default a2/10).
    """
    level = u_level if u_level is not None else 0.1 * traj.params_used.a2
    events = detect_events(traj.after(t_from), EventSpec.u_crosses(level))
    if not events:
        raise NoCrossingError(f"trajectory never rises through u={level}")
    return float(np.mean([e.state.v for e in events]))


def orbit_distance_to_singular(
    traj: Trajectory,
    orbit: SingularOrbit,
    exclusion_radius: float,
    t_from: float = 0.0,
) -> float:
    """
    Max distance of the samples (t >= t_from) to the singular orbit, ignoring samples within
    exclusion_radius of the fold point (0, f(0)) and of the jump point A.
    """
    tail = traj.after(t_from)
    pts = np.column_stack([tail.u, tail.v])
    fold = np.array([0.0, traj.params_used.fold_ordinate])
    jump = np.array(orbit.a.as_tuple())
    keep = (np.hypot(*(pts - fold).T) > exclusion_radius) & (
        np.hypot(*(pts - jump).T) > exclusion_radius
    )
    if not keep.any():
        return 0.0
    return float(orbit_polyline_distance(pts[keep], orbit).max())


def stable_dt(p: ModelParams, u_max: float, v_max: float, safety: float = 2.5) -> float:
    """Step below the RK4 stability limit for states in [0, u_max] x [0, v_max]."""
    K, a1, a2 = p.K, p.a1, p.a2
    fast = (3 * K * u_max**2 + 2 * K * abs(a1 + a2) * u_max + K * abs(a1 * a2) + v_max) / p.epsilon
    slow = p.gamma * (p.b * u_max + 2 * v_max + p.b * v_max + p.c)
    return safety / max(fast + slow, 1e-300)


@dataclass(frozen=True)
class EnsembleResult:
    final: np.ndarray
    min_raw: float
    floored: int


def integrate_ensemble(
    starts: np.ndarray, p: ModelParams, dt: float, n_steps: int, state_floor: float = 1e-12
) -> EnsembleResult:
    """Vectorized RK4 over many initial states; tracks the most negative pre-floor component."""
    rhs = make_rhs(p)
    u = np.array(starts[:, 0], dtype=float)
    v = np.array(starts[:, 1], dtype=float)
    min_raw = float(min(u.min(), v.min())) if u.size else 0.0
    floored = 0
    for i in range(n_steps):
        ru, rv = rk4_update(rhs, u, v, dt)
        if not (np.isfinite(ru).all() and np.isfinite(rv).all()):
            bad = int(np.flatnonzero(~(np.isfinite(ru) & np.isfinite(rv)))[0])
            raise IntegrationBlowupError(i * dt, (float(u[bad]), float(v[bad])))
        min_raw = min(min_raw, float(ru.min()), float(rv.min()))
        mask_u = (ru < state_floor) & (ru != 0.0)
        mask_v = (rv < state_floor) & (rv != 0.0)
        floored += int(mask_u.sum() + mask_v.sum())
        u = np.where(mask_u, state_floor, ru)
        v = np.where(mask_v, state_floor, rv)
    return EnsembleResult(final=np.column_stack([u, v]), min_raw=min_raw, floored=floored)


@dataclass(frozen=True)
class QuadrantReport:
    n_starts: int
    n_steps: int
    min_raw: float
    floored: int

    @property
    def invariant(self) -> bool:
        return self.min_raw >= -1e-15


def quadrant_invariance_check(
    p: ModelParams,
    n_starts: int,
    n_steps: int,
    dt: float | None = None,
    seed: int = 0,
    state_floor: float = 1e-12,
) -> QuadrantReport:
    """Integrate random starts in (0, 1]^2 and report the most negative pre-floor value."""
    rng = np.random.default_rng(seed)
    starts = 1.0 - rng.random((n_starts, 2))
    step = dt if dt is not None else min(0.01, p.epsilon / 10.0, stable_dt(p, 1.0, 1.0))
    res = integrate_ensemble(starts, p, step, n_steps, state_floor)
    if res.min_raw < -1e-15:
        logger.warning(f"Quadrant invariance violated: min pre-floor component {res.min_raw:.3g}")
    return QuadrantReport(n_starts=n_starts, n_steps=n_steps, min_raw=res.min_raw, floored=res.floored)


@dataclass(frozen=True)
class RadialReport:
    n_starts: int
    initial_max: float
    final_max: float
    bound: float
    contracted: bool
    monotone_violations: int
    dt_caps: int


def radial_boundedness_check(
    p: ModelParams,
    n_starts: int,
    cfg: IntegrationConfig,
    *,
    box: float = 20.0,
    bound: float = 1.0,
    seed: int = 0,
    starts: np.ndarray | None = None,
) -> RadialReport:
    """
    Track E = eps u^2 + v^2 from random starts in [0, box]^2.

    Every run whose initial E exceeds `bound` must end (final 10% of the run) below its
    initial value. The step follows cfg but is capped below the RK4 stability limit of the
    current state box, so far starts can be integrated with a fixed-step scheme.
    """
    if starts is None:
        starts = np.random.default_rng(seed).random((n_starts, 2)) * box
    u = np.array(starts[:, 0], dtype=float)
    v = np.array(starts[:, 1], dtype=float)
    rhs = make_rhs(p)
    eps = p.epsilon

    def energy(uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
        return eps * uu * uu + vv * vv

    def radial(uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
        du, dv = rhs(uu, vv)
        return 2.0 * eps * uu * du + 2.0 * vv * dv

    base_dt = cfg.resolve_dt(eps)
    e0 = energy(u, v)
    e_prev, r_prev = e0, radial(u, v)
    final_window_start = 0.9 * cfg.t_end
    tail_max = np.zeros_like(e0)
    capping = OnceLogger(logger, "stability cap")
    violations = 0
    t = 0.0
    while t < cfg.t_end - 1e-12:
        cap = stable_dt(p, float(u.max(initial=0.0)), float(v.max(initial=0.0)))
        dt = min(base_dt, cap, cfg.t_end - t)
        if dt < base_dt and dt < cfg.t_end - t:
            capping.hit("dt %.3g -> %.3g at t=%.6g ms", base_dt, dt, t)
        u, v = rk4_update(rhs, u, v, dt)
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise IntegrationBlowupError(t, (float("nan"), float("nan")))
        u = np.where((u < cfg.state_floor) & (u != 0.0), cfg.state_floor, u)
        v = np.where((v < cfg.state_floor) & (v != 0.0), cfg.state_floor, v)
        t += dt

        e_cur, r_cur = energy(u, v), radial(u, v)
        decreasing = (r_prev < 0) & (r_cur < 0)
        violations += int(np.count_nonzero(decreasing & (e_cur > e_prev * (1 + 1e-12))))
        e_prev, r_prev = e_cur, r_cur
        if t >= final_window_start:
            tail_max = np.maximum(tail_max, e_cur)
    capping.summarize()

    far = e0 > bound
    contracted = bool(np.all(tail_max[far] < e0[far])) if far.any() else True
    return RadialReport(
        n_starts=int(u.size),
        initial_max=float(e0.max(initial=0.0)),
        final_max=float(tail_max.max(initial=0.0)),
        bound=bound,
        contracted=contracted,
        monotone_violations=violations,
        dt_caps=capping.count,
    )
