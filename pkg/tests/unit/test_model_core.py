import numpy as np
import pytest
from scipy.optimize import brentq

from src.rhythm_engine.model_core import (
    classify_eigenvalues,
    eigenvalues_2x2,
    fixed_points,
    hopf_curve,
    hopf_epsilon,
    interior_fixed_point,
    jacobian,
    nullcline_f,
    nullcline_g,
    orbit_polyline_distance,
    radial_derivative,
    singular_orbit,
    trace_det,
    vector_field,
)
from src.rhythm_engine.models import (
    FixedPointKind,
    InvalidParametersError,
    ModelParams,
    State,
)


def _params(**kw) -> ModelParams:
    return ModelParams(**{"K": 60.0, "eps": 0.1, **kw})


def test_interior_fixed_point_matches_bisection_oracle():
    p = _params()
    fp = interior_fixed_point(p)

    def residual(u: float) -> float:
        return p.K * (u - p.a1) * (u - p.a2) + p.b * u + p.c

    oracle = brentq(residual, 0.0, p.a2, xtol=1e-15, rtol=1e-15)
    assert abs(fp.u - oracle) < 1e-10
    assert abs(residual(fp.u)) < 1e-10
    assert fp.u == pytest.approx(0.0084676, rel=1e-4)
    assert fp.v == pytest.approx(0.1014, rel=1e-3)


def test_interior_point_lies_on_both_nullclines():
    p = _params(K=45.0)
    fp = interior_fixed_point(p)
    assert nullcline_f(fp.u, p) == pytest.approx(fp.v, abs=1e-12)
    assert nullcline_g(fp.u, p) == pytest.approx(fp.v, abs=1e-15)
    du, dv = vector_field(fp, p)
    assert abs(du) < 1e-12 and abs(dv) < 1e-12


def test_fixed_points_are_classified():
    points = fixed_points(_params())
    assert [(fp.location.u, fp.location.v) for fp in points[:3]] == [
        (0.0, 0.0),
        (0.0, 6.6e-4),
        (0.1, 0.0),
    ]
    kinds = [fp.kind for fp in points]
    assert kinds == [
        FixedPointKind.SOURCE,
        FixedPointKind.SADDLE,
        FixedPointKind.SADDLE,
        FixedPointKind.SOURCE,
    ]

    # above the Hopf value the interior point turns into a sink
    sink = fixed_points(_params(eps=0.5))[-1]
    assert sink.kind is FixedPointKind.SINK


def test_classify_eigenvalues_tolerance():
    assert classify_eigenvalues((1e-12 + 1j, 1e-12 - 1j)) is FixedPointKind.NON_HYPERBOLIC
    assert classify_eigenvalues((2.0 + 0j, -1.0 + 0j)) is FixedPointKind.SADDLE
    assert classify_eigenvalues((-0.1 + 3j, -0.1 - 3j)) is FixedPointKind.SINK


def test_eigenvalues_match_numpy():
    p = _params()
    m = jacobian(interior_fixed_point(p), p)
    ours = sorted(eigenvalues_2x2(m), key=lambda z: (z.real, z.imag))
    ref = sorted(np.linalg.eigvals(m), key=lambda z: (z.real, z.imag))
    assert np.allclose(ours, ref, atol=1e-12)


def test_hopf_epsilon_value_and_zero_trace():
    eps_h = hopf_epsilon(60.0)
    assert 0.36 < eps_h < 0.40

    p = _params(eps=eps_h)
    tr, det = trace_det(jacobian(interior_fixed_point(p), p))
    assert abs(tr) < 1e-10
    assert det > 0


def test_hopf_epsilon_is_a_condition_on_eps_times_gamma():
    eps_h = hopf_epsilon(60.0)
    p = _params(eps=eps_h / 2.0, gamma=2.0)
    tr, _ = trace_det(jacobian(interior_fixed_point(p), p))
    assert abs(tr) < 1e-10


def test_hopf_curve_rows():
    rows = hopf_curve(30.0, 100.0, 71)
    assert len(rows) == 71
    assert rows[0][0] == 30.0 and rows[-1][0] == 100.0
    ks = [k for k, _ in rows]
    assert ks == sorted(ks)
    assert all(eps > 0 for _, eps in rows)
    assert dict(rows)[60.0] == pytest.approx(hopf_epsilon(60.0))


def test_hopf_curve_rejects_bad_ranges():
    with pytest.raises(ValueError):
        hopf_curve(30.0, 100.0, 1)
    with pytest.raises(ValueError):
        hopf_curve(100.0, 30.0, 10)


def test_params_outside_unique_intersection_are_rejected():
    bound = ModelParams.k_upper_bound()
    assert bound == pytest.approx(177.243, abs=0.01)
    with pytest.raises(ValueError):
        ModelParams(K=bound + 1.0, eps=0.1)
    with pytest.raises(InvalidParametersError):
        _params().with_(K=bound + 1.0)
    with pytest.raises(ValueError):
        ModelParams(K=60.0, eps=0.1, a1=0.01)


def test_state_rejects_points_outside_quadrant():
    with pytest.raises(ValueError):
        State(-1e-3, 0.1)
    with pytest.raises(ValueError):
        State(float("nan"), 0.1)


def test_singular_orbit_geometry():
    p = _params()
    y_c = 0.5 * p.fold_ordinate
    orbit = singular_orbit(p, y_c)

    assert orbit.is_closed
    assert orbit.a.u == pytest.approx(p.midpoint)
    assert orbit.b.as_tuple() == (0.0, pytest.approx(nullcline_f(p.midpoint, p)))
    assert orbit.c.as_tuple() == (0.0, y_c)
    assert orbit.d.v == pytest.approx(y_c)
    assert orbit.d.u > p.midpoint
    arc = orbit.arc
    assert np.allclose(arc[:, 1], nullcline_f(arc[:, 0], p))


def test_singular_orbit_needs_exit_below_fold():
    p = _params()
    with pytest.raises(ValueError):
        singular_orbit(p, 1.5 * p.fold_ordinate)
    with pytest.raises(ValueError):
        singular_orbit(p, 0.0)


def test_radial_derivative_agrees_with_chain_rule():
    p = _params(gamma=1.7)
    for s in (State(0.03, 0.2), State(1.5, 0.01), State(0.0, 2.0)):
        du, dv = vector_field(s, p)
        expected = 2.0 * p.epsilon * s.u * du + 2.0 * s.v * dv
        assert radial_derivative(s, p) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_orbit_polyline_distance():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
    points = np.array([[0.5, 0.0], [0.5, 0.25], [2.0, 0.5], [-1.0, -1.0]])
    d = orbit_polyline_distance(points, square, chunk=2)
    assert np.allclose(d, [0.0, 0.25, 1.0, np.sqrt(2.0)])
