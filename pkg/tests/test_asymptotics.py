from __future__ import annotations

import numpy as np
import pytest

from asymptotics import (
    drift_free_reference, exp_equivalence_diag, extrapolate_limit, ldp_tube_experiment, rate_function,
    strictly_decreasing, tube_infimum, varadhan_curve, varadhan_panel, varadhan_symmetry, varadhan_upper_curve,
)
from errors import DomainError
from kernels import log_gaussian_p
from measures import DriftMeasure
from models import FLAG_DETERMINISTIC_ZERO, PiecewiseLinearPath
from parametrix import SeriesConfig
from simulate import SdeConfig

ORIGIN = np.zeros(3)
E1 = np.array([1.0, 0.0, 0.0])
T_GRID = [0.1, 0.05, 0.025, 0.0125]


# -------- функционал действия --------

def test_rate_function_segment():
    path = PiecewiseLinearPath.segment(ORIGIN, [1.0, 1.0, 0.0])
    assert rate_function(path) == pytest.approx(1.0)


def test_rate_function_constant_path():
    assert rate_function(PiecewiseLinearPath.segment(E1, E1)) == 0.0


def test_rate_function_scales_quadratically():
    path = PiecewiseLinearPath([0.0, 0.3, 1.0], [[0.0, 0.0], [0.5, -0.2], [0.1, 0.4]])
    doubled = PiecewiseLinearPath(path.knots, 2.0 * path.values)
    assert rate_function(doubled) == pytest.approx(4.0 * rate_function(path), rel=1e-12)


def test_rate_function_refinement_invariant():
    path = PiecewiseLinearPath([0.0, 0.3, 1.0], [[0.0, 0.0], [0.5, -0.2], [0.1, 0.4]])
    assert rate_function(path.refine(17)) == pytest.approx(rate_function(path), rel=1e-12)


@pytest.mark.parametrize('knots, values', [
    ([0.0], [[0.0]]),
    ([0.0, 0.5], [[0.0], [1.0]]),
    ([0.0, 0.7, 0.5, 1.0], [[0.0], [1.0], [0.0], [1.0]]),
    ([0.0, 1.0], [[0.0], [1.0], [2.0]]),
])
def test_path_validation(knots, values):
    with pytest.raises(DomainError):
        PiecewiseLinearPath(knots, values)


# -------- трубки --------

def test_tube_infimum_constant_path():
    assert tube_infimum(PiecewiseLinearPath.segment(ORIGIN, ORIGIN), 0.1) == pytest.approx(0.0, abs=1e-10)


def test_tube_infimum_segment():
    # оптимум: отрезок до точки (1 − ρ)e₁
    value = tube_infimum(PiecewiseLinearPath.segment(ORIGIN, E1), 0.1, knots=20)
    assert value == pytest.approx(0.5 * 0.9 ** 2, abs=1e-5)
    assert value <= rate_function(PiecewiseLinearPath.segment(ORIGIN, E1))


def test_tube_infimum_domain():
    with pytest.raises(DomainError):
        tube_infimum(PiecewiseLinearPath.segment(ORIGIN, E1), 0.0)


# -------- Варадан --------

def test_drift_free_reference_matches_log_density():
    t = np.array(T_GRID)
    expected = [ti * log_gaussian_p(ti, ORIGIN, E1, 3) for ti in t]
    np.testing.assert_allclose(drift_free_reference(t, 1.0, 3), expected, rtol=0.0, atol=1e-12)


def test_upper_curve_dominates_reference():
    t = np.array(T_GRID)
    assert np.all(varadhan_upper_curve(0.3, t, 1.0, 3) >= drift_free_reference(t, 1.0, 3))
    with pytest.raises(DomainError):
        varadhan_upper_curve(1.0, t, 1.0, 3)


def test_extrapolate_limit_recovers_intercept():
    t = np.array([0.1, 0.05, 0.025])
    values = -0.5 + 0.3 * t * np.log(t) - 2.0 * t
    limit, err = extrapolate_limit(t, values, np.zeros(3))
    assert limit == pytest.approx(-0.5, abs=1e-10)
    assert err == 0.0


def test_extrapolate_limit_needs_three_points():
    limit, err = extrapolate_limit([0.1, 0.05], [-0.4, -0.45], [0.0, 0.0])
    assert np.isnan(limit) and np.isnan(err)


def test_exact_curve_drift_free():
    cfg = SeriesConfig(drift=DriftMeasure.zero(3))
    curve = varadhan_curve(ORIGIN, E1, T_GRID, 'exact', cfg)
    np.testing.assert_allclose(curve.values, curve.reference, rtol=0.0, atol=1e-12)
    assert curve.extrapolated_limit == pytest.approx(-0.5, abs=1e-9)
    assert curve.excluded == []


def test_exact_curve_requires_closed_form(bump_drift):
    with pytest.raises(DomainError):
        varadhan_curve(ORIGIN, E1, T_GRID, 'exact', SeriesConfig(drift=bump_drift))


def test_curve_grid_must_decrease():
    cfg = SeriesConfig(drift=DriftMeasure.zero(3))
    with pytest.raises(DomainError):
        varadhan_curve(ORIGIN, E1, [0.05, 0.1], 'exact', cfg)
    with pytest.raises(DomainError):
        varadhan_curve(ORIGIN, E1, T_GRID, 'spline', cfg)


def test_constant_drift_limit_is_drift_free():
    cfg = SeriesConfig(drift=DriftMeasure.constant([0.5, -1.0, 0.0]))
    curve = varadhan_curve(ORIGIN, E1, T_GRID, 'exact', cfg)
    assert curve.extrapolated_limit == pytest.approx(-0.5, abs=1e-2)


def test_panel_and_symmetry_exact():
    cfg = SeriesConfig(drift=DriftMeasure.zero(3))
    pairs = [(ORIGIN, E1), (ORIGIN, [0.0, 0.5, 0.5])]
    frame = varadhan_panel(pairs, T_GRID, 'exact', cfg)
    assert frame.attrs['max_deviation'] < 1e-9
    report = varadhan_symmetry(ORIGIN, [0.3, 0.4, 0.0], T_GRID, 'exact', cfg)
    assert report['consistent']
    assert report['gap'] == pytest.approx(0.0, abs=1e-12)


# -------- большие уклонения --------

def test_ldp_tube_zero_drift_columns():
    cfg = SdeConfig(drift=DriftMeasure.zero(3), step=1e-3, horizon=0.2, paths=2000, seed=3)
    path = PiecewiseLinearPath.segment(ORIGIN, ORIGIN)
    frame = ldp_tube_experiment(ORIGIN, path, 1.5, [0.2, 0.1], cfg)
    assert list(frame['epsilon']) == [0.2, 0.1]
    assert {'estimate', 'lo', 'hi', 'reference', 'probability', 'stderr', 'n_samples', 'flags'} <= set(frame)
    assert np.all(frame['probability'] > 0.8)


def test_ldp_tube_path_must_start_at_x():
    cfg = SdeConfig(drift=DriftMeasure.zero(3), step=1e-3, horizon=0.2, paths=10)
    with pytest.raises(DomainError):
        ldp_tube_experiment(E1, PiecewiseLinearPath.segment(ORIGIN, E1), 0.2, [0.2, 0.1], cfg)


def test_exp_equivalence_deterministic_zero(bump_drift):
    cfg = SdeConfig(drift=bump_drift, step=1e-3, horizon=0.2, paths=100)
    frame = exp_equivalence_diag(ORIGIN, 0.5, [0.2, 0.1], cfg)
    assert list(frame['probability']) == [0.0, 0.0]
    assert FLAG_DETERMINISTIC_ZERO in frame.loc[0, 'flags']
    assert frame.attrs['sampled_rows'] == 0
    assert frame.attrs['sampled_decreasing'] is None


def test_exp_equivalence_separates_sampled_rows():
    # шапочка высоты 6: при ε = 0.2 превышения есть, при ε = 0.05 δ ≥ ε·sup|b|
    drift = DriftMeasure.bump(ORIGIN, 0.5, 6.0, E1)
    cfg = SdeConfig(drift=drift, step=1e-3, horizon=0.2, paths=200, seed=5)
    frame = exp_equivalence_diag(ORIGIN, 0.5, [0.2, 0.05], cfg)
    assert frame.loc[0, 'probability'] > 0.0
    assert frame.loc[1, 'probability'] == 0.0
    assert frame.attrs['upper_decreasing']
    assert frame.attrs['sampled_rows'] == 1
    assert frame.attrs['sampled_decreasing'] is None


def test_strictly_decreasing():
    assert strictly_decreasing([3.0, 2.0, -1.0])
    assert not strictly_decreasing([3.0, 3.0, -1.0])
