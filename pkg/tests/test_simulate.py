from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from errors import BudgetExhausted, DomainError, NumericalRefusal
from kernels import gaussian_ball_probability, gaussian_p
from measures import DriftMeasure, GaussianBump, build_drift
from models import FLAG_DETERMINISTIC_ZERO, FLAG_ZERO_HITS
from simulate import (
    SdeConfig, ball_lower_bound, ball_probability, chapman_lower_bound, coupled_levels, estimate_laplace,
    estimate_moment, estimate_moments, kde_density, second_moment_oracle, simulate_paths,
    sup_A_chernoff_bound, sup_A_tail,
)

ORIGIN = np.zeros(3)
E1 = np.array([1.0, 0.0, 0.0])


def zero_cfg(**overrides):
    params = dict(drift=DriftMeasure.zero(3), step=1e-3, horizon=0.1, paths=4000, seed=7, block_size=1000)
    params.update(overrides)
    return SdeConfig(**params)


def bump_mean(x, t, center=ORIGIN, sigma=0.5):
    """∫_0^t E f(x + W_s) ds для f = exp(−|y−c|²/2σ²) в ℝ³."""
    r2 = float(np.sum((np.asarray(x) - center) ** 2))
    value, _ = integrate.quad(
        lambda s: (sigma ** 2 / (sigma ** 2 + s)) ** 1.5 * np.exp(-r2 / (2.0 * (sigma ** 2 + s))), 0.0, t)
    return value


# -------- конфигурация --------

def test_step_must_resolve_mollifier():
    with pytest.raises(DomainError):
        zero_cfg(mollify_level=3, step=0.1)
    assert zero_cfg(mollify_level=3, step=2.0 ** -6).mollify_level == 3


def test_singular_drift_requires_level():
    drift = build_drift({'dimension': 3, 'kind': 'components', 'components': [
        {'kind': 'cantor_product'}, {'kind': 'density', 'family': 'zero'}, {'kind': 'density', 'family': 'zero'},
    ]})
    with pytest.raises(DomainError):
        SdeConfig(drift=drift)


def test_with_horizon_shrinks_step():
    cfg = zero_cfg(step=0.03, horizon=0.3)
    short = cfg.with_horizon(0.05)
    assert short.n_steps() * short.step == pytest.approx(0.05)
    assert short.step <= 0.03
    with pytest.raises(DomainError):
        zero_cfg(step=0.03, horizon=0.1).n_steps()


# -------- траектории --------

def test_paths_reproducible_across_workers():
    cfg = zero_cfg(drift=DriftMeasure.constant(E1), horizon=0.01, paths=300, block_size=100)
    serial = simulate_paths(cfg, ORIGIN, workers=1)
    pooled = simulate_paths(cfg, ORIGIN, workers=2)
    np.testing.assert_array_equal(serial.states, pooled.states)


def test_seed_changes_paths():
    cfg = zero_cfg(horizon=0.01, paths=50)
    first = simulate_paths(cfg, ORIGIN)
    again = simulate_paths(cfg, ORIGIN)
    other = simulate_paths(replace(cfg, seed=8), ORIGIN)
    np.testing.assert_array_equal(first.states, again.states)
    assert not np.array_equal(first.states, other.states)


def test_paths_split_into_brownian_and_drift():
    cfg = zero_cfg(drift=DriftMeasure.constant(E1), horizon=0.01, paths=20)
    ens = simulate_paths(cfg, ORIGIN)
    np.testing.assert_allclose(ens.states, ens.x0 + ens.brownian + ens.drift_part)
    np.testing.assert_allclose(ens.drift_part[:, -1, :], np.tile(0.01 * E1, (20, 1)))
    assert ens.n_paths == 20
    assert len(ens.times) == 11


def test_record_times_thin_the_grid():
    ens = simulate_paths(zero_cfg(paths=10), ORIGIN, record_times=[0.05, 0.1])
    np.testing.assert_allclose(ens.times, [0.05, 0.1])
    assert ens.at(0.1).shape == (10, 3)


def test_record_budget():
    with pytest.raises(BudgetExhausted):
        simulate_paths(zero_cfg(paths=10_000_000, horizon=1.0), ORIGIN)


def test_wrong_start_dimension():
    with pytest.raises(DomainError):
        simulate_paths(zero_cfg(paths=10), [0.0, 0.0])


def test_coupled_levels_constant_drift():
    cfg = zero_cfg(drift=DriftMeasure.constant(E1), horizon=0.1, paths=50)
    frame = coupled_levels(cfg, ORIGIN, [1, 2])
    assert list(frame['level']) == [1, 2]
    assert frame.loc[0, 'median_max_gap'] == pytest.approx(0.0, abs=1e-12)
    assert frame.loc[0, 'int_abs_b_q0.5'] == pytest.approx(0.1, rel=1e-9)


# -------- моменты и Лаплас --------

def test_first_moment_matches_gaussian_integral(bump_functional):
    res = estimate_moment(zero_cfg(), ORIGIN, 1, 0.1, functional=bump_functional)
    exact = bump_mean(ORIGIN, 0.1)
    assert abs(res.mean - exact) <= 4.0 * res.stderr + 5e-3 * exact
    assert res.mean <= res.details['bound'] + 3.0 * res.stderr


def test_moment_bounds_hold_for_each_power(bump_functional):
    results = estimate_moments(zero_cfg(), ORIGIN, [0, 1, 2, 3], 0.1, functional=bump_functional)
    assert results[0].mean == 1.0
    for n in (1, 2, 3):
        assert results[n].mean <= results[n].details['bound'] + 3.0 * results[n].stderr
        assert results[n].details['n_power'] == n


@pytest.mark.slow
def test_second_moment_matches_oracle(bump_functional):
    res = estimate_moment(zero_cfg(paths=20000), ORIGIN, 2, 0.1, functional=bump_functional)
    oracle = second_moment_oracle(bump_functional, ORIGIN, 0.1)
    assert abs(res.mean - oracle) <= 4.0 * res.stderr + 2e-2 * oracle


def test_moment_power_limit():
    with pytest.raises(DomainError):
        estimate_moment(zero_cfg(), ORIGIN, 7, 0.1, functional=GaussianBump(ORIGIN, 0.5, 1.0))


def test_laplace_bound_holds(bump_drift):
    cfg = zero_cfg(drift=bump_drift, paths=2000)
    res = estimate_laplace(cfg, ORIGIN, 1.0, 0.1)
    assert res.mean >= 1.0
    assert res.mean <= res.details['bound'] + 3.0 * res.stderr
    assert res.details['bound_series'] <= res.details['bound']


def test_laplace_overflow_refused():
    huge = GaussianBump(ORIGIN, 0.5, 1e4)
    with pytest.raises(NumericalRefusal) as info:
        estimate_laplace(zero_cfg(), ORIGIN, 1.0, 0.1, functional=huge)
    assert info.value.value == pytest.approx(1e3)


def test_laplace_requires_positive_lambda(bump_functional):
    with pytest.raises(DomainError):
        estimate_laplace(zero_cfg(), ORIGIN, 0.0, 0.1, functional=bump_functional)


# -------- хвосты sup|A| --------

def test_sup_tail_deterministic_zero(bump_drift):
    res = sup_A_tail(zero_cfg(drift=bump_drift), ORIGIN, 0.5, 0.1)
    assert res.mean == 0.0
    assert res.upper95 == 0.0
    assert FLAG_DETERMINISTIC_ZERO in res.flags


def test_sup_tail_counts_exceedances():
    # sup|b| = 6, δ < ε·sup|b|: ветвь Монте-Карло, у почти всех путей |A_ε| > δ
    cfg = zero_cfg(drift=DriftMeasure.bump(ORIGIN, 0.5, 6.0, E1), paths=500)
    res = sup_A_tail(cfg, ORIGIN, 0.1, 0.1)
    assert res.mean > 0.9
    assert res.details['eps'] == 0.1 and res.details['delta'] == 0.1
    assert res.details['hits'] == round(res.mean * res.n_samples)
    assert res.details['lower95'] <= res.mean <= res.upper95
    assert FLAG_DETERMINISTIC_ZERO not in res.flags


def test_sup_tail_small_window_bounded():
    cfg = zero_cfg(drift=DriftMeasure.bump(ORIGIN, 0.5, 6.0, E1), paths=500)
    res = sup_A_tail(cfg, ORIGIN, 0.1, 0.05)
    assert 0.0 <= res.mean <= 1.0
    assert res.upper95 >= res.mean
    if res.mean == 0.0:
        assert FLAG_ZERO_HITS in res.flags


def test_chernoff_bound_zero_drift():
    assert sup_A_chernoff_bound(DriftMeasure.zero(3), 0.5, 0.1) == 0.0


# -------- шары и плотность --------

def test_ball_probability_zero_drift_matches_exact():
    res = ball_probability(zero_cfg(paths=20000), ORIGIN, [0.2, 0.0, 0.0], 0.2, 0.05)
    exact = res.details['exact']
    assert abs(res.mean - exact) <= 4.0 * res.stderr
    assert res.details['lower_bound'] <= exact
    assert 0.0 < res.details['best_delta'] < 0.2


def test_ball_lower_bound_is_below_gaussian_probability():
    value, best = ball_lower_bound(3, 0.3, 0.25, 0.1)
    assert 0.0 < value <= gaussian_ball_probability(3, 0.3, 0.25, 0.1)
    assert 0.0 < best < 0.25


def test_ball_probability_domain():
    with pytest.raises(DomainError):
        ball_probability(zero_cfg(), ORIGIN, ORIGIN, 0.0, 0.05)


def test_kde_matches_smoothed_gaussian():
    t = 0.05
    ens = simulate_paths(zero_cfg(paths=20000, horizon=t), ORIGIN, record_times=[t])
    res = kde_density(ens, t, ORIGIN)
    h = res.details['bandwidth']
    assert abs(res.mean - gaussian_p(t + h * h, ORIGIN, ORIGIN, 3)) <= 4.0 * res.stderr
    assert res.details['effective_samples'] >= 30
    assert res.flags == []


def test_kde_rejects_bad_bandwidth():
    ens = simulate_paths(zero_cfg(paths=50, horizon=0.01), ORIGIN, record_times=[0.01])
    with pytest.raises(DomainError):
        kde_density(ens, 0.01, ORIGIN, bandwidth=-1.0)


def test_chapman_bound_zero_drift():
    report = chapman_lower_bound(0.1, 0.5, 0.1, ORIGIN, [0.2, 0.0, 0.0], zero_cfg(paths=5000))
    assert report.holds
    assert report.q == pytest.approx(gaussian_p(0.1, ORIGIN, np.array([0.2, 0.0, 0.0]), 3))
    assert 'ball' in report.to_dict()
