"""
Local analysis around the fold point (0, f(0)).

Fold frame:  x = u, y = v + K a1 a2, so the fold sits at the origin. With w = K a1 a2,
s = K (a1 + a2) and time measured on the fast clock (t / eps):

    x' = x (s x - K x^2 - y)
    y' = eps gamma (-w (c + w) - b w x + (c + 2 w) y + b x y - y^2)

Blow-up chart:  x = r x2, y = r^2 y2, eps = r^3; after dividing time by r

    x2' = s x2^2 - r (K x2^3 + x2 y2)
    y2' = gamma (-w (c + w) - b w r x2 + (c + 2 w) r^2 y2 + b r^3 x2 y2 - r^4 y2^2)

and at r = 0 the system solves in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.rhythm_engine.integrator import NoCrossingError, integrate_until
from src.rhythm_engine.models import Direction, EventSpec, IntegrationConfig, ModelParams, State

logger = logging.getLogger(__name__)


class BlowupTimeError(ValueError):
    pass


@dataclass(frozen=True)
class FoldFrame:
    x: float
    y: float


@dataclass(frozen=True)
class BlowupCoords:
    x2: float
    y2: float
    r: float


@dataclass(frozen=True)
class FoldFramePolynomial:
    """Monomial coefficients {(i, j): c} of x^i y^j; the y equation omits its eps*gamma factor."""

    x_terms: dict[tuple[int, int], float]
    y_terms: dict[tuple[int, int], float]

    @staticmethod
    def _eval(terms: dict[tuple[int, int], float], x: float, y: float) -> float:
        return sum(coef * x**i * y**j for (i, j), coef in terms.items())

    def evaluate(self, ff: FoldFrame, epsilon: float, gamma: float = 1.0) -> tuple[float, float]:
        return (
            self._eval(self.x_terms, ff.x, ff.y),
            epsilon * gamma * self._eval(self.y_terms, ff.x, ff.y),
        )


@dataclass(frozen=True)
class CanardMeasurement:
    epsilon: float
    k_measured: float
    y_bar: float
    prediction: float
    abs_error: float

    @property
    def rel_error(self) -> float:
        return self.abs_error / abs(self.prediction)


def _w(p: ModelParams) -> float:
    return p.K * p.a1 * p.a2


def to_fold_frame(s: State, p: ModelParams) -> FoldFrame:
    return FoldFrame(x=s.u, y=s.v + _w(p))


def from_fold_frame(ff: FoldFrame, p: ModelParams) -> State:
    return State(ff.x, ff.y - _w(p))


def fold_frame_field(ff: FoldFrame, p: ModelParams) -> tuple[float, float]:
    """Field in the fold frame on the fast clock: eps times the original field."""
    x, y = ff.x, ff.y
    w = _w(p)
    s = p.K * (p.a1 + p.a2)
    dx = x * (s * x - p.K * x * x - y)
    dy = p.epsilon * p.gamma * (
        -w * (p.c + w) - p.b * w * x + (p.c + 2 * w) * y + p.b * x * y - y * y
    )
    return dx, dy


def fold_frame_polynomial(p: ModelParams) -> FoldFramePolynomial:
    w = _w(p)
    return FoldFramePolynomial(
        x_terms={(2, 0): p.K * (p.a1 + p.a2), (3, 0): -p.K, (1, 1): -1.0},
        y_terms={
            (0, 0): -w * (p.c + w),
            (1, 0): -p.b * w,
            (0, 1): p.c + 2 * w,
            (1, 1): p.b,
            (0, 2): -1.0,
        },
    )


def blowup(ff: FoldFrame, epsilon: float) -> BlowupCoords:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    r = float(np.cbrt(epsilon))
    return BlowupCoords(x2=ff.x / r, y2=ff.y / (r * r), r=r)


def unblow(bc: BlowupCoords) -> FoldFrame:
    return FoldFrame(x=bc.r * bc.x2, y=bc.r * bc.r * bc.y2)


def blowup_field(bc: BlowupCoords, p: ModelParams) -> tuple[float, float]:
    """Desingularized field of the blow-up chart (time divided by r)."""
    x2, y2, r = bc.x2, bc.y2, bc.r
    w = _w(p)
    s = p.K * (p.a1 + p.a2)
    dx2 = s * x2 * x2 - r * (p.K * x2**3 + x2 * y2)
    dy2 = p.gamma * (
        -w * (p.c + w)
        - p.b * w * r * x2
        + (p.c + 2 * w) * r**2 * y2
        + p.b * r**3 * x2 * y2
        - r**4 * y2 * y2
    )
    return dx2, dy2


def r0_blowup_time(x2_0: float, p: ModelParams) -> float:
    """Time at which x2 escapes to infinity on r = 0; inf when x2_0 < 0."""
    if x2_0 == 0:
        raise ValueError("x2_0 must be nonzero")
    s = p.K * (p.a1 + p.a2)
    return 1.0 / (x2_0 * s) if x2_0 * s > 0 else math.inf


def r0_solution(x2_0: float, y2_0: float, t: float, p: ModelParams) -> tuple[float, float]:
    """Closed-form solution of the r = 0 system from (x2_0, y2_0) at time t."""
    t_star = r0_blowup_time(x2_0, p)
    if t >= t_star:
        raise BlowupTimeError(f"t={t} is at or past the blow-up time {t_star:.6g}")
    w = _w(p)
    s = p.K * (p.a1 + p.a2)
    x2 = 1.0 / (1.0 / x2_0 - s * t)
    y2 = y2_0 - p.gamma * w * (p.c + w) * t
    return x2, y2


def r0_horizontal_asymptote(x2_0: float, y2_0: float, p: ModelParams) -> float:
    """Limit of y2 as x2 escapes to infinity (t -> blow-up time)."""
    if x2_0 == 0:
        raise ValueError("x2_0 must be nonzero")
    w = _w(p)
    return y2_0 - p.gamma * (p.a1 * p.a2 * (p.c + w) / (p.a1 + p.a2)) / x2_0


def canard_prediction(k: float, p: ModelParams) -> float:
    """Limiting fold-frame ordinate at x = a2/2 for an entry at x(0) = k eps on y = 0."""
    if k == 0:
        raise ValueError("entry coefficient k must be nonzero")
    return -p.a1 * p.a2 * (p.c + _w(p)) / (k * (p.a1 + p.a2))


def measure_canard(
    p: ModelParams,
    epsilon_list: list[float],
    entry_k: float,
    icfg: IntegrationConfig,
) -> list[CanardMeasurement]:
    """
    For each eps: start at (entry_k eps, f(0)), integrate with gamma = 1 and dt <= eps/100
    until u first rises through a2/2, and compare the fold-frame ordinate there with the
    limiting prediction.
    """
    if entry_k <= 0:
        raise ValueError(f"entry_k must be positive, got {entry_k}")
    if any(e <= 0 for e in epsilon_list):
        raise ValueError("epsilons must be positive")
    if any(b >= a for a, b in zip(epsilon_list, epsilon_list[1:])):
        raise ValueError("epsilon_list must be strictly decreasing")

    x_bar = 0.5 * p.a2
    section = EventSpec.u_crosses(x_bar, Direction.UP)
    out = []
    for eps in epsilon_list:
        pe = p.with_(epsilon=eps, gamma=1.0)
        dt = min(icfg.dt, eps / 100.0) if icfg.dt is not None else eps / 100.0
        run_cfg = icfg.model_copy(update={"dt": dt, "transient_discard": 0.0})
        start = from_fold_frame(FoldFrame(x=entry_k * eps, y=0.0), pe)
        try:
            hit = integrate_until(start, pe, run_cfg, section)
        except NoCrossingError as exc:
            raise NoCrossingError(f"eps={eps}: {exc}") from exc
        y_bar = to_fold_frame(hit.state, pe).y
        prediction = canard_prediction(entry_k, pe)
        out.append(
            CanardMeasurement(
                epsilon=eps,
                k_measured=start.u / eps,
                y_bar=y_bar,
                prediction=prediction,
                abs_error=abs(y_bar - prediction),
            )
        )
        logger.info(f"Canard eps={eps:g}: y_bar={y_bar:.6g}, prediction={prediction:.6g}")
    return out
