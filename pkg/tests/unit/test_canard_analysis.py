import math

import pytest

from src.rhythm_engine.canard_analysis import (
    BlowupCoords,
    BlowupTimeError,
    FoldFrame,
    blowup,
    blowup_field,
    canard_prediction,
    fold_frame_field,
    fold_frame_polynomial,
    from_fold_frame,
    measure_canard,
    r0_blowup_time,
    r0_horizontal_asymptote,
    r0_solution,
    to_fold_frame,
    unblow,
)
from src.rhythm_engine.model_core import vector_field
from src.rhythm_engine.models import IntegrationConfig, ModelParams, State


def _params(**kw) -> ModelParams:
    return ModelParams(**{"K": 60.0, "eps": 0.01, **kw})


def test_fold_point_maps_to_origin():
    p = _params()
    ff = to_fold_frame(State(0.0, p.fold_ordinate), p)
    assert ff.x == 0.0 and ff.y == pytest.approx(0.0, abs=1e-18)
    back = from_fold_frame(FoldFrame(0.02, -0.01), p)
    assert back.v == pytest.approx(p.fold_ordinate - 0.01)


def test_fold_frame_field_is_the_original_field_on_the_fast_clock():
    p = _params(gamma=1.3)
    for s in (State(0.02, 0.05), State(0.004, 0.061), State(0.08, 0.2)):
        dx, dy = fold_frame_field(to_fold_frame(s, p), p)
        du, dv = vector_field(s, p)
        assert dx == pytest.approx(p.epsilon * du, rel=1e-10, abs=1e-16)
        assert dy == pytest.approx(p.epsilon * dv, rel=1e-10, abs=1e-16)


def test_fold_frame_polynomial_coefficients():
    p = _params()
    poly = fold_frame_polynomial(p)
    w = p.K * p.a1 * p.a2
    assert poly.x_terms == {(2, 0): pytest.approx(5.4), (3, 0): -60.0, (1, 1): -1.0}
    assert poly.y_terms[(0, 0)] == pytest.approx(-w * (p.c + w))
    assert poly.y_terms[(0, 2)] == -1.0
    ff = FoldFrame(0.013, -0.004)
    assert poly.evaluate(ff, p.epsilon, p.gamma) == pytest.approx(fold_frame_field(ff, p))


def test_blowup_field_desingularizes_the_fold_frame_field():
    p = _params(eps=2e-3)
    bc = blowup(FoldFrame(0.01, -0.002), p.epsilon)
    assert bc.r == pytest.approx(2e-3 ** (1.0 / 3.0))
    assert unblow(bc).x == pytest.approx(0.01)

    dx, dy = fold_frame_field(unblow(bc), p)
    dx2, dy2 = blowup_field(bc, p)
    assert dx2 == pytest.approx(dx / bc.r**2, rel=1e-10)
    assert dy2 == pytest.approx(dy / bc.r**3, rel=1e-10)


def test_blowup_needs_positive_epsilon():
    with pytest.raises(ValueError):
        blowup(FoldFrame(0.1, 0.1), 0.0)


def test_r0_solution_solves_the_r0_system():
    p = _params(gamma=1.5)
    x0, y0, t, h = 0.5, -0.2, 0.01, 1e-6
    x_plus, y_plus = r0_solution(x0, y0, t + h, p)
    x_minus, y_minus = r0_solution(x0, y0, t - h, p)
    x, y = r0_solution(x0, y0, t, p)
    dx2, dy2 = blowup_field(BlowupCoords(x2=x, y2=y, r=0.0), p)
    assert (x_plus - x_minus) / (2 * h) == pytest.approx(dx2, rel=1e-6)
    assert (y_plus - y_minus) / (2 * h) == pytest.approx(dy2, rel=1e-6)


def test_r0_blowup_time_and_asymptote():
    p = _params()
    s = p.K * (p.a1 + p.a2)
    assert r0_blowup_time(0.5, p) == pytest.approx(1.0 / (0.5 * s))
    assert r0_blowup_time(-0.5, p) == math.inf

    t_star = r0_blowup_time(0.5, p)
    with pytest.raises(BlowupTimeError):
        r0_solution(0.5, 0.0, t_star, p)
    _, y_late = r0_solution(0.5, 0.0, t_star * (1 - 1e-9), p)
    assert y_late == pytest.approx(r0_horizontal_asymptote(0.5, 0.0, p), rel=1e-6)


def test_canard_prediction_value():
    assert canard_prediction(1.0, _params()) == pytest.approx(-6.5933e-4, rel=1e-4)
    assert canard_prediction(2.0, _params()) == pytest.approx(-6.5933e-4 / 2, rel=1e-4)
    with pytest.raises(ValueError):
        canard_prediction(0.0, _params())


def test_measure_canard_validates_epsilons():
    p = _params()
    with pytest.raises(ValueError):
        measure_canard(p, [1e-3, 1e-2], 1.0, IntegrationConfig())
    with pytest.raises(ValueError):
        measure_canard(p, [1e-3], -1.0, IntegrationConfig())


def test_measure_canard_coarse():
    results = measure_canard(_params(), [1e-2, 5e-3], 1.0, IntegrationConfig())
    assert [m.epsilon for m in results] == [1e-2, 5e-3]
    for m in results:
        assert m.k_measured == pytest.approx(1.0)
        assert m.abs_error == pytest.approx(abs(m.y_bar - m.prediction))


# Exit ordinates measured at K=60, entry k=1. The x*y term of the fold-frame field stops
# being negligible once |y| = O(1), so the error does not shrink monotonically with eps.
MEASURED_EXITS = {1e-3: -5.093e-5, 1e-4: -4.773e-4, 1e-5: -3.283e-4}


@pytest.mark.slow
def test_canard_exit_ordinates_are_pinned():
    results = measure_canard(_params(), list(MEASURED_EXITS), 1.0, IntegrationConfig())
    for m in results:
        assert m.y_bar == pytest.approx(MEASURED_EXITS[m.epsilon], rel=1e-2)
        assert m.prediction == pytest.approx(-6.5933e-4, rel=1e-4)
    errors = [m.abs_error for m in results]
    assert errors == pytest.approx([6.08e-4, 1.82e-4, 3.31e-4], rel=2e-2)
    # closest at the middle epsilon
    assert errors[1] < errors[2] < errors[0]
