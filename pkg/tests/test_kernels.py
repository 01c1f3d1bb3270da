from __future__ import annotations

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from errors import DomainError
from kernels import (
    alpha_coeff, alpha_step, g_kernel, gaussian_ball_probability, gaussian_grad, gaussian_p, log_factorial, m_delta,
    m_delta_numeric, m_delta_unchecked, phi_bound, phi_even_odd_split, phi_series, phi_series_with_tail,
    sphere_area, unit_ball_volume,
)


def test_gaussian_p_matches_scipy():
    x = np.array([0.1, -0.2, 0.3])
    y = np.array([0.5, 0.4, -0.1])
    expected = stats.multivariate_normal(mean=x, cov=0.3 * np.eye(3)).pdf(y)
    assert gaussian_p(0.3, x, y, 3) == pytest.approx(expected, rel=1e-12)


def test_gaussian_p_vectorised_over_points():
    y = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    values = gaussian_p(0.5, np.zeros(2), y, 2)
    assert values.shape == (3,)
    assert values[0] > values[1] > values[2]


def test_gaussian_p_rejects_nonpositive_time():
    with pytest.raises(DomainError):
        gaussian_p(0.0, np.zeros(3), np.ones(3), 3)


def test_g_kernel_relates_to_gaussian():
    x, y = np.zeros(3), np.array([0.3, 0.1, 0.0])
    assert gaussian_p(0.2, x, y, 3) == pytest.approx((2.0 * np.pi) ** -1.5 * g_kernel(1.0, 0.2, x, y, 3), rel=1e-12)


def test_g_kernel_decreases_in_a():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    s = rng.uniform(0.01, 1.0, size=50)
    values = [g_kernel(a, s, x, y, 3) for a in (0.25, 0.5, 1.0, 2.0)]
    assert all(np.all(smaller <= larger) for larger, smaller in zip(values, values[1:]))


def test_g_kernel_unit_distance():
    assert g_kernel(2.0, 1.0, np.zeros(3), np.array([1.0, 0.0, 0.0]), 3) == pytest.approx(np.exp(-1.0), rel=1e-12)


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_chapman_kolmogorov(seed):
    rng = np.random.default_rng(seed)
    s, t = rng.uniform(0.05, 1.0, size=2)
    x, y = rng.normal(size=3), rng.normal(size=3)
    # в ℝ³ ядро распадается в произведение одномерных
    factors = [
        integrate.quad(lambda z: gaussian_p(s, xi, z, 1) * gaussian_p(t, z, yi, 1),
                       min(xi, yi) - 12.0, max(xi, yi) + 12.0, points=[xi, yi], limit=200,
                       epsabs=0.0, epsrel=1e-10)[0]
        for xi, yi in zip(x, y)
    ]
    assert np.prod(factors) == pytest.approx(gaussian_p(s + t, x, y, 3), rel=1e-8)


def test_gaussian_grad_matches_finite_difference():
    s, y = 0.4, np.array([0.2, -0.1, 0.3])
    z = np.array([0.5, 0.5, -0.2])
    h = 1e-6
    numeric = np.array([
        (gaussian_p(s, z + h * e, y, 3) - gaussian_p(s, z - h * e, y, 3)) / (2.0 * h) for e in np.eye(3)
    ])
    np.testing.assert_allclose(gaussian_grad(s, z, y, 3), numeric, rtol=1e-6)


@pytest.mark.parametrize('delta', [0.1, 0.5, 0.9])
def test_gradient_bounded_by_wider_kernel(delta):
    # |∇G_1| = (2π)^{3/2}|∇p|; sup_u u·e^{−δu²/4} = m_{δ/2}
    rng = np.random.default_rng(11)
    s = rng.uniform(0.01, 1.0, size=200)
    z = rng.normal(scale=2.0, size=(200, 3))
    y = np.zeros(3)
    grad = (2.0 * np.pi) ** 1.5 * np.linalg.norm(gaussian_grad(s, z, y, 3), axis=1)
    bound = m_delta_unchecked(0.5 * delta) * s ** -0.5 * g_kernel(1.0 - 0.5 * delta, s, z, y, 3)
    assert np.all(grad <= bound * (1.0 + 1e-12))


@pytest.mark.parametrize('delta', [0.1, 0.5, 0.9])
def test_gradient_bound_is_attained(delta):
    s, y = 0.3, np.zeros(3)
    z = np.array([np.sqrt(2.0 * s / delta), 0.0, 0.0])
    grad = (2.0 * np.pi) ** 1.5 * np.linalg.norm(gaussian_grad(s, z, y, 3))
    wide = s ** -0.5 * g_kernel(1.0 - 0.5 * delta, s, z, y, 3)
    assert grad == pytest.approx(m_delta_unchecked(0.5 * delta) * wide, rel=1e-12)
    # с m_δ вместо m_{δ/2} неравенство в этой точке нарушается
    assert grad > m_delta(delta) * wide


def test_ball_probability_one_dimension():
    t, dist, eps = 0.2, 0.3, 0.25
    sd = np.sqrt(t)
    expected = stats.norm.cdf((dist + eps) / sd) - stats.norm.cdf((dist - eps) / sd)
    assert gaussian_ball_probability(1, dist, eps, t) == pytest.approx(expected, rel=1e-9)


def test_ball_probability_centered_uses_chi2():
    assert gaussian_ball_probability(3, 0.0, 1.0, 1.0) == pytest.approx(stats.chi2.cdf(1.0, df=3), rel=1e-12)
    assert gaussian_ball_probability(3, 0.5, 0.0, 1.0) == 0.0


# -------- m_δ --------

def test_m_delta_value():
    assert m_delta(0.25) == pytest.approx(1.213061319425267, rel=1e-12)


@pytest.mark.parametrize('delta', [round(0.1 * k, 1) for k in range(1, 10)])
def test_m_delta_numeric_agrees(delta):
    assert m_delta_numeric(delta) == pytest.approx(m_delta(delta), abs=1e-8)


@pytest.mark.parametrize('delta', [0.0, 1.0, -0.5])
def test_m_delta_domain(delta):
    with pytest.raises(DomainError):
        m_delta(delta)


# -------- Φ --------

def test_phi_at_one_against_mpmath():
    mpmath.mp.dps = 30
    exact = mpmath.nsum(lambda n: 1 / mpmath.sqrt(mpmath.factorial(n)), [0, mpmath.inf])
    assert phi_series(1.0) == pytest.approx(float(exact), rel=1e-11)
    assert phi_series(1.0) == pytest.approx(3.4695, abs=1e-3)


def test_phi_tail_is_small():
    value, tail, terms = phi_series_with_tail(3.0)
    assert tail < 1e-10
    assert terms >= 36


def test_phi_at_zero():
    assert phi_series_with_tail(0.0) == (1.0, 0.0, 1)


@pytest.mark.parametrize('z', np.linspace(0.0, 5.0, 50))
def test_phi_bound_holds(z):
    assert phi_series(float(z)) <= phi_bound(float(z)) * (1.0 + 1e-12)


@pytest.mark.parametrize('z', [0.0, 0.7, 2.0, 5.0])
def test_even_odd_split_sums_to_bound(z):
    even, odd = phi_even_odd_split(z)
    assert even + odd == pytest.approx(phi_bound(z), rel=1e-10)


def test_phi_rejects_negative():
    with pytest.raises(DomainError):
        phi_series(-0.1)


# -------- α_n --------

def test_alpha_coeff_values():
    assert alpha_coeff(0) == alpha_coeff(1) == 1.0
    assert alpha_coeff(2) == pytest.approx(0.5, rel=1e-12)
    assert alpha_coeff(3) == pytest.approx(0.19245008972987526, rel=1e-12)


def test_alpha_steps_reproduce_product():
    running = 1.0
    for n in range(2, 12):
        running *= alpha_step(n - 1)
        assert running == pytest.approx(alpha_coeff(n), rel=1e-12)


def test_alpha_coeff_decreasing():
    values = [alpha_coeff(n) for n in range(1, 10)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_alpha_coeff_below_inverse_root_factorial():
    for n in range(21):
        assert alpha_coeff(n) <= np.exp(-0.5 * log_factorial(n)) * (1.0 + 1e-12)


# -------- геометрия --------

def test_ball_and_sphere_in_three_dimensions():
    assert unit_ball_volume(3) == pytest.approx(4.0 * np.pi / 3.0, rel=1e-12)
    assert sphere_area(3) == pytest.approx(4.0 * np.pi, rel=1e-12)
    assert sphere_area(2) == pytest.approx(2.0 * np.pi, rel=1e-12)
