"""
Vector field, nullclines, fixed points, Jacobian, Hopf condition and the singular orbit.

Pure functions of ModelParams; nothing here integrates or draws random numbers.
"""

from __future__ import annotations

import cmath
import logging
import math
from collections.abc import Callable
from typing import TypeVar

import numpy as np

from src.rhythm_engine.models import (
    FixedPoint,
    FixedPointKind,
    InvalidParametersError,
    ModelParams,
    SingularOrbit,
    State,
)

logger = logging.getLogger(__name__)

NON_HYPERBOLIC_TOL = 1e-9
DEFAULT_ARC_SAMPLES = 512

ArrayOrFloat = TypeVar("ArrayOrFloat", float, np.ndarray)
Rhs = Callable[[ArrayOrFloat, ArrayOrFloat], tuple[ArrayOrFloat, ArrayOrFloat]]


def vector_field(s: State, p: ModelParams) -> tuple[float, float]:
    """(du/dt, dv/dt) of the conductance system at s."""
    return make_rhs(p)(s.u, s.v)


def field_rhs(
    K: float, a1: float, a2: float, b: float, c: float, eps: float, gamma: float
) -> Rhs:
    """Right-hand side over raw coefficients, unvalidated; works on floats and numpy arrays."""

    def rhs(u, v):
        du = u * (-K * (u - a1) * (u - a2) - v) / eps
        dv = gamma * v * (b * u - v + c)
        return du, dv

    return rhs


def make_rhs(p: ModelParams) -> Rhs:
    """Right-hand side as a closure over p."""
    return field_rhs(p.K, p.a1, p.a2, p.b, p.c, p.epsilon, p.gamma)


def nullcline_f(u: ArrayOrFloat, p: ModelParams) -> ArrayOrFloat:
    """u-nullcline branch v = f(u) = -K(u - a1)(u - a2)."""
    return -p.K * (u - p.a1) * (u - p.a2)


def nullcline_g(u: ArrayOrFloat, p: ModelParams) -> ArrayOrFloat:
    """v-nullcline branch v = g(u) = b u + c."""
    return p.b * u + p.c


def _fixed_point_residual(u: float, p: ModelParams) -> float:
    return p.K * (u - p.a1) * (u - p.a2) + p.b * u + p.c


def interior_fixed_point(p: ModelParams) -> State:
    """
    Intersection (u*, v*) of v = f(u) and v = g(u) inside the quadrant.

    u* is the root of K u^2 + (b - K(a1+a2)) u + (K a1 a2 + c) = 0 lying in (0, a2).
    """
    lo_res = _fixed_point_residual(0.0, p)
    hi_res = _fixed_point_residual(p.a2, p)
    if not (lo_res < 0 < hi_res):
        raise InvalidParametersError(
            f"no interior fixed point bracketed in (0, a2): residuals {lo_res:.3g}, {hi_res:.3g}"
        )

    qa = p.K
    qb = p.b - p.K * (p.a1 + p.a2)
    qc = p.K * p.a1 * p.a2 + p.c
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise InvalidParametersError(f"fixed-point quadratic has no real root (disc={disc:.3g})")
    sq = math.sqrt(disc)
    # Pick the branch without cancellation for the larger-magnitude root, then Vieta.
    q = -0.5 * (qb + math.copysign(sq, qb))
    roots = [q / qa, qc / q] if q != 0 else [0.0, 0.0]
    inside = [r for r in roots if 0.0 < r < p.a2]
    if len(inside) != 1:
        raise InvalidParametersError(f"expected one root in (0, a2), got {roots}")

    u_star = inside[0]
    return State(u_star, nullcline_g(u_star, p))


def jacobian(s: State, p: ModelParams) -> np.ndarray:
    u, v = s.u, s.v
    K, a1, a2 = p.K, p.a1, p.a2
    j11 = (-3.0 * K * u * u + 2.0 * K * (a1 + a2) * u - K * a1 * a2 - v) / p.epsilon
    j12 = -u / p.epsilon
    j21 = p.gamma * p.b * v
    j22 = p.gamma * (-2.0 * v + (p.b * u + p.c))
    return np.array([[j11, j12], [j21, j22]], dtype=float)


def trace_det(m: np.ndarray) -> tuple[float, float]:
    return float(m[0, 0] + m[1, 1]), float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def eigenvalues_2x2(m: np.ndarray) -> tuple[complex, complex]:
    """Closed-form eigenvalues from trace and determinant, larger real part first."""
    tr, det = trace_det(m)
    half = 0.5 * tr
    root = cmath.sqrt(complex(half * half - det))
    return complex(half) + root, complex(half) - root


def classify_eigenvalues(eigs: tuple[complex, complex]) -> FixedPointKind:
    re1, re2 = eigs[0].real, eigs[1].real
    if abs(re1) < NON_HYPERBOLIC_TOL or abs(re2) < NON_HYPERBOLIC_TOL:
        return FixedPointKind.NON_HYPERBOLIC
    if re1 * re2 < 0:
        return FixedPointKind.SADDLE
    return FixedPointKind.SOURCE if re1 > 0 else FixedPointKind.SINK


def fixed_points(p: ModelParams) -> list[FixedPoint]:
    """The four stationary points (0,0), (0,c), (a2,0), (u*,v*), classified."""
    locations = [State(0.0, 0.0), State(0.0, p.c), State(p.a2, 0.0), interior_fixed_point(p)]
    out = []
    for loc in locations:
        eigs = eigenvalues_2x2(jacobian(loc, p))
        out.append(FixedPoint(location=loc, eigenvalues=eigs, kind=classify_eigenvalues(eigs)))
    return out


def _with_k(K: float, p: ModelParams | None) -> ModelParams:
    if p is None:
        try:
            return ModelParams(K=K, epsilon=1.0)
        except ValueError as exc:
            raise InvalidParametersError(str(exc)) from exc
    return p if p.K == K else p.with_(K=K)


def hopf_epsilon(K: float, p: ModelParams | None = None) -> float:
    """
    Critical value of eps*gamma where tr J(u*, v*) = 0 (this is eps_H itself when gamma = 1).

    For eps*gamma below it the interior point is a source; above it, a sink.
    """
    q = _with_k(K, p)
    fp = interior_fixed_point(q)
    u = fp.u
    return q.K * u * (q.a1 + q.a2 - 2.0 * u) / (q.b * u + q.c)


def hopf_curve(
    K_min: float, K_max: float, n_samples: int, p: ModelParams | None = None
) -> list[tuple[float, float]]:
    """(K, eps_H) rows over an evenly spaced K grid, increasing in K."""
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if not (0 < K_min < K_max):
        raise ValueError(f"invalid K range [{K_min}, {K_max}]")
    rows = []
    for K in np.linspace(K_min, K_max, n_samples):
        rows.append((float(K), hopf_epsilon(float(K), p)))
    return rows


def singular_orbit(
    p: ModelParams, y_C: float, n_arc: int = DEFAULT_ARC_SAMPLES
) -> SingularOrbit:
    """
    Closed singular curve through A (the parabola's top), B = (0, f(m)), C = (0, y_C)
    and D, the larger-u point of v = f(u) at height y_C, closed by the arc from D to A.
    """
    f0 = p.fold_ordinate
    if not (0.0 < y_C <= f0):
        raise ValueError(f"exit ordinate y_C={y_C} must lie in (0, f(0)={f0}]")
    if n_arc < 2:
        raise ValueError("n_arc must be >= 2")

    m = p.midpoint
    f_m = nullcline_f(m, p)
    u_d = m + math.sqrt(max(m * m - p.a1 * p.a2 - y_C / p.K, 0.0))

    arc_u = np.linspace(u_d, m, n_arc)
    arc_v = nullcline_f(arc_u, p)
    head = np.array([[m, f_m], [0.0, f_m], [0.0, y_C]])
    polyline = np.vstack([head, np.column_stack([arc_u, arc_v])])

    return SingularOrbit(
        a=State(m, f_m),
        b=State(0.0, f_m),
        c=State(0.0, y_C),
        d=State(float(arc_u[0]), float(arc_v[0])),
        polyline=polyline,
    )


def radial_derivative(s: State, p: ModelParams) -> float:
    """d/dt (eps u^2 + v^2) along the flow."""
    u, v = s.u, s.v
    K, a1, a2, g = p.K, p.a1, p.a2, p.gamma
    return 2.0 * (
        -K * u**4
        + K * (a1 + a2) * u**3
        - K * a1 * a2 * u**2
        - u * u * v
        + p.b * g * u * v * v
        - g * v**3
        + p.c * g * v * v
    )


def orbit_polyline_distance(
    points: np.ndarray, polyline: np.ndarray | SingularOrbit, chunk: int = 4096
) -> np.ndarray:
    """Euclidean distance from each (n, 2) point to the nearest segment of the polyline."""
    poly = polyline.polyline if isinstance(polyline, SingularOrbit) else np.asarray(polyline)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p0 = poly[:-1]
    seg = poly[1:] - p0
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    safe_len2 = np.where(seg_len2 > 0, seg_len2, 1.0)

    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        rel = block[:, None, :] - p0[None, :, :]
        t = np.einsum("nsk,sk->ns", rel, seg) / safe_len2
        t = np.clip(np.where(seg_len2 > 0, t, 0.0), 0.0, 1.0)
        nearest = p0[None, :, :] + t[:, :, None] * seg[None, :, :]
        d2 = np.sum((block[:, None, :] - nearest) ** 2, axis=2)
        out[start : start + chunk] = np.sqrt(d2.min(axis=1))
    return out
