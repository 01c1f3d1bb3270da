from __future__ import annotations

import numpy as np
import pytest

from errors import DomainError
from measures import (
    CantorProduct, Density, DriftMeasure, EnvelopeKernel, GaussianBump, GaussianKernel, Mollifier, WeightedSum,
    build_drift, build_measure, cantor_cdf, kato_membership_profile, kato_norm_N, kato_norm_report, lambda_norm,
    mollified_drift,
)
from models import FLAG_NOT_KATO, FLAG_OUTSIDE_THEORY

ORIGIN = np.zeros(3)


# -------- моллифайер --------

@pytest.mark.parametrize('d', [1, 2, 3])
def test_mollifier_unit_mass(d):
    assert Mollifier(d, 0).unit_mass() == pytest.approx(1.0, rel=5e-3)


def test_mollifier_mass_is_scale_free():
    assert Mollifier(3, 4).unit_mass() == pytest.approx(Mollifier(3, 0).unit_mass(), rel=1e-10)


def test_mollifier_support():
    moll = Mollifier(3, 2)
    assert moll.radius == 0.25
    assert moll(np.array([[0.26, 0.0, 0.0]]))[0] == 0.0
    assert moll(np.zeros((1, 3)))[0] > 0.0


def test_mollifier_negative_level():
    with pytest.raises(DomainError):
        Mollifier(3, -1)


def test_constant_density_is_fixed_by_mollification():
    mu = Density.constant_density(2.5, 3)
    pts = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(mu.mollify(6, pts), np.full(5, 2.5))


def test_mollified_drift_constant():
    drift = DriftMeasure.constant([1.0, -2.0, 0.5])
    np.testing.assert_allclose(mollified_drift(drift, 3, [0.1, 0.2, 0.3]), [1.0, -2.0, 0.5])


def test_mollified_drift_rejects_nonfinite_point():
    with pytest.raises(DomainError):
        mollified_drift(DriftMeasure.zero(3), 1, [np.nan, 0.0, 0.0])


# -------- канторова мера --------

def test_cantor_cdf_values():
    np.testing.assert_allclose(cantor_cdf([0.0, 0.25, 1.0 / 3.0, 0.5, 0.75, 1.0]),
                               [0.0, 1.0 / 3.0, 0.5, 0.5, 2.0 / 3.0, 1.0], atol=1e-12)


def test_cantor_product_is_singular():
    mu = build_measure({'kind': 'cantor_product'}, 3)
    assert isinstance(mu, CantorProduct)
    assert not mu.has_density
    with pytest.raises(DomainError):
        mu.density_values(np.zeros((1, 3)))


def test_cantor_mollified_drift_matches_sampling():
    mu = CantorProduct(0, 2.0, 0.0, 1.0, 3)
    drift = DriftMeasure([mu, Density.constant_density(0.0, 3), Density.constant_density(0.0, 3)])
    level, x = 2, np.array([0.3, 0.5, 0.5])
    moll = Mollifier(3, level)
    pts, mass = mu.sample(50000, np.random.default_rng(8), x - moll.radius, x + moll.radius)
    vals = mass * moll(x[None, :] - pts)
    estimate, stderr = vals.mean(), vals.std(ddof=1) / np.sqrt(vals.size)
    b = mollified_drift(drift, level, x)
    assert b[0] == pytest.approx(estimate, abs=4.0 * stderr)
    assert b[1] == b[2] == 0.0


def test_density_mollification_converges():
    bump = GaussianBump(ORIGIN, 0.5, 1.0)
    pts = np.random.default_rng(2).normal(scale=0.4, size=(6, 3))
    errors = [float(np.max(np.abs(bump.mollify(n, pts) - bump.f(pts)))) for n in (3, 5, 7)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-3


# -------- гауссовы интегралы --------

def test_bump_gaussian_integral_matches_quadrature():
    bump = GaussianBump(np.zeros(2), 0.5, 1.0)
    generic = Density(bump.f, 2, box=bump.box)
    x = np.array([0.3, -0.2])
    assert generic.integrate_gaussian(x, 1.0, 0.25) == pytest.approx(bump.integrate_gaussian(x, 1.0, 0.25), rel=1e-6)


def test_weighted_sum_is_linear():
    bump = GaussianBump(ORIGIN, 0.5, 1.0)
    total = WeightedSum([(2.0, bump), (-0.5, bump)])
    x = np.array([0.1, 0.0, 0.2])
    assert total.integrate_gaussian(x, 0.3, 0.25) == pytest.approx(1.5 * bump.integrate_gaussian(x, 0.3, 0.25))


# -------- нормы Като --------

@pytest.mark.parametrize('t', [0.5, 0.25, 0.125])
def test_kato_norm_lebesgue_closed_form(t):
    alpha = 0.25
    expected = 2.0 * (np.pi / alpha) ** 1.5 * np.sqrt(t)
    assert kato_norm_N(Density.lebesgue(3), t, alpha) == pytest.approx(expected, rel=1e-4)


def test_kato_norm_is_homogeneous():
    small = kato_norm_N(GaussianBump(ORIGIN, 0.5, 1.0), 0.2, 0.25)
    large = kato_norm_N(GaussianBump(ORIGIN, 0.5, 3.0), 0.2, 0.25)
    assert large == pytest.approx(3.0 * small, rel=1e-10)


def test_kato_norm_increases_with_time():
    mu = GaussianBump(ORIGIN, 0.5, 1.0)
    values = [kato_norm_N(mu, t, 0.25) for t in (0.05, 0.1, 0.2)]
    assert values[0] < values[1] < values[2]


def test_kato_norm_zero_measure():
    report = kato_norm_report(Density.constant_density(0.0, 3), 0.5, 0.25)
    assert report.value == 0.0
    assert report.flags == []


def test_kato_norm_domain():
    with pytest.raises(DomainError):
        kato_norm_N(Density.lebesgue(3), 0.0, 0.25)
    with pytest.raises(DomainError):
        kato_norm_N(Density.lebesgue(3), 0.5, -1.0)


def test_lambda_norm_lebesgue_gaussian_kernel():
    # ∫_0^t s^{-1/2} ds = 2√t при q = p и μ = dx
    assert lambda_norm(Density.lebesgue(3), 0.3, GaussianKernel(3)) == pytest.approx(2.0 * np.sqrt(0.3), rel=1e-8)


@pytest.mark.slow
def test_cantor_kato_norm_vanishes_with_time():
    mu = CantorProduct(0, 1.0, 0.0, 1.0, 3)
    values = [kato_norm_N(mu, t, 0.25) for t in (0.1, 0.01, 0.001)]
    assert values[0] > values[1] > values[2] > 0.0
    # N_t ~ t^{γ/2}, γ = log2/log3
    assert values[2] < 0.5 * values[0]


def test_envelope_kernel_dominates_gaussian():
    bump = GaussianBump(ORIGIN, 0.5, 1.0)
    for t in (0.2, 0.05):
        assert lambda_norm(bump, t, EnvelopeKernel(3)) >= lambda_norm(bump, t, GaussianKernel(3))


# -------- профиль K_{d,1} --------

@pytest.mark.slow
def test_cantor_profile_exponent():
    mu = CantorProduct(0, 1.0, 0.0, 1.0, 3)
    profile = kato_membership_profile(mu, [0.5, 0.25, 0.125, 0.0625, 0.03125])
    assert 0.5 <= profile.fitted_exponent() <= 0.75
    assert np.all(np.diff(profile.values) < 0.0)


def test_hyperplane_profile_is_flagged():
    mu = build_measure({'kind': 'hyperplane'}, 3).total_variation()
    profile = kato_membership_profile(mu, [0.5, 0.25, 0.125])
    assert FLAG_NOT_KATO in profile.flags
    assert not profile.consistent_with_kato


def test_low_dimension_profile_flagged():
    profile = kato_membership_profile(GaussianBump(np.zeros(2), 0.5, 1.0), [0.5, 0.25])
    assert FLAG_OUTSIDE_THEORY in profile.flags


def test_profile_radii_must_decrease():
    with pytest.raises(DomainError):
        kato_membership_profile(Density.lebesgue(3), [0.1, 0.2])


# -------- вектор сноса --------

def test_drift_constructors():
    zero = DriftMeasure.zero(3)
    assert zero.is_zero and zero.has_density and zero.is_constant
    np.testing.assert_array_equal(zero.field(np.ones((4, 3))), np.zeros((4, 3)))

    bump = DriftMeasure.bump(ORIGIN, 0.5, 2.0, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(bump.field(ORIGIN), [[2.0, 0.0, 0.0]])
    assert bump.sup_bound() == pytest.approx(2.0)

    ou = DriftMeasure.ornstein_uhlenbeck(0.4, 3)
    np.testing.assert_allclose(ou.field([[1.0, -2.0, 0.5]]), [[-0.4, 0.8, -0.2]])


def test_build_drift_from_dict():
    drift = build_drift({'dimension': 3, 'kind': 'constant', 'vector': [1.0, 0.0, 0.0]})
    assert drift.is_constant
    np.testing.assert_array_equal(drift.constant_vector(), [1.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        build_drift({'dimension': 3, 'kind': 'vortex'})


def test_drift_dimension_mismatch():
    with pytest.raises(DomainError):
        DriftMeasure([Density.lebesgue(3), Density.lebesgue(3)])
