# kernels.py
"""
Гауссовы ядра, их градиенты, семейство G_a и элементарные функции,
из которых собираются оценки моментов и ряда параметрикса.

Все ядра сначала считаются в логарифмах и экспоненцируются на выходе:
при t ~ 1e-3 и |x−y| ~ 3 прямое вычисление уходит в ноль.
"""
import numpy as np
from scipy import optimize, special, stats

from errors import DomainError

PHI_TAIL_TOL = 1e-12


# ---------- ВСПОМОГАТЕЛЬНОЕ ----------

def _sqdist(x, y, d: int | None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if d is not None and d == 1 and x.ndim == 0 and y.ndim == 0:
        return (x - y) ** 2
    diff = x - y
    if d is not None and diff.shape[-1:] != (d,):
        raise DomainError(f'ожидалась последняя ось размерности {d}, получено {diff.shape}')
    return np.sum(diff * diff, axis=-1)


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def _check_time(t) -> None:
    if np.any(np.asarray(t) <= 0.0):
        raise DomainError('время должно быть > 0')


# ---------- ГАУССОВО ЯДРО ----------

def log_gaussian_p(t, x, y, d: int):
    _check_time(t)
    return _scalar(-0.5 * d * np.log(2.0 * np.pi * t) - _sqdist(x, y, d) / (2.0 * t))


def gaussian_p(t, x, y, d: int):
    """p(t,x,y) = (2πt)^{-d/2} exp(−|x−y|²/2t)."""
    return _scalar(np.exp(log_gaussian_p(t, x, y, d)))


def gaussian_grad(s, z, y, d: int) -> np.ndarray:
    """∇_z p(s,z,y) = −((z−y)/s)·p(s,z,y); последняя ось: компоненты."""
    _check_time(s)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    p = np.asarray(gaussian_p(s, z, y, d))
    scale = s[..., None] if s.ndim else s
    return -((z - y) / scale) * p[..., None]


def log_g_kernel(a, s, x, y, d: int):
    if np.any(np.asarray(a) <= 0.0):
        raise DomainError('параметр a должен быть > 0')
    _check_time(s)
    return _scalar(-0.5 * d * np.log(s) - a * _sqdist(x, y, d) / (2.0 * s))


def g_kernel(a, s, x, y, d: int):
    """G_a(s,x,y) = s^{-d/2} exp(−a|x−y|²/2s); p = (2π)^{-d/2} G_1."""
    return _scalar(np.exp(log_g_kernel(a, s, x, y, d)))


def gaussian_ball_probability(d: int, distance: float, radius: float, t: float) -> float:
    """
    P(|x + W_t − y| < ε) при |x−y| = distance: |·|²/t: нецентральный χ²
    с d степенями свободы и параметром distance²/t.
    """
    _check_time(t)
    if radius <= 0.0:
        return 0.0
    if distance == 0.0:
        return float(stats.chi2.cdf(radius * radius / t, df=d))
    return float(stats.ncx2.cdf(radius * radius / t, df=d, nc=distance * distance / t))


# ---------- m_δ ----------

def m_delta_unchecked(delta: float) -> float:
    """sup_{r>0} r·e^{−δr²/2} = 1/√(eδ), для любого δ > 0."""
    if delta <= 0.0:
        raise DomainError('δ должно быть > 0')
    return float(1.0 / np.sqrt(np.e * delta))


def m_delta(delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise DomainError(f'δ={delta} вне (0,1)')
    return m_delta_unchecked(delta)


def m_delta_numeric(delta: float) -> float:
    """Тот же супремум, найденный численно (оракул для тестов)."""
    if delta <= 0.0:
        raise DomainError('δ должно быть > 0')
    res = optimize.minimize_scalar(
        lambda r: -r * np.exp(-0.5 * delta * r * r),
        bounds=(0.0, 10.0 / np.sqrt(delta)),
        method='bounded',
        options={'xatol': 1e-12},
    )
    return float(-res.fun)


# ---------- РЯД Φ ----------

def _log_phi_term(n, z: float):
    return n * np.log(z) - 0.5 * special.gammaln(n + 1.0)


def phi_series_with_tail(z: float, terms: int = 1) -> tuple[float, float, int]:
    """
    Φ(z) = Σ z^n/√(n!). Число членов наращивается, пока последний член
    не станет < 1e-12 и отношение соседних членов z/√(N+1) < 1/2;
    тогда хвост ≤ член·r/(1−r).

    Возвращает (частичная сумма, граница хвоста, число членов).
    """
    if z < 0.0:
        raise DomainError('z должно быть ≥ 0')
    if z == 0.0:
        return 1.0, 0.0, 1
    n_max = max(int(terms), 1)
    while True:
        ratio = z / np.sqrt(n_max)
        last = float(np.exp(_log_phi_term(n_max - 1, z)))
        if last < PHI_TAIL_TOL and ratio < 0.5:
            break
        n_max *= 2
    n = np.arange(n_max, dtype=float)
    total = float(np.sum(np.exp(_log_phi_term(n, z))))
    return total, last * ratio / (1.0 - ratio), n_max


def phi_series(z: float, terms: int = 1) -> float:
    return phi_series_with_tail(z, terms)[0]


def phi_bound(z: float) -> float:
    return float((1.0 + z) * np.exp(z * z))


def phi_even_odd_split(z: float) -> tuple[float, float]:
    """Мажоранты Σz^{2n}/n! и z·Σz^{2n}/n!; их сумма тождественно равна (1+z)e^{z²}."""
    if z < 0.0:
        raise DomainError('z должно быть ≥ 0')
    n_max = 8
    while n_max < 4 * z * z + 40:
        n_max *= 2
    n = np.arange(n_max, dtype=float)
    even = float(np.sum(np.exp(2.0 * n * np.log(z) - special.gammaln(n + 1.0)))) if z > 0 else 1.0
    return even, z * even


# ---------- α_n ----------

def alpha_step(k: int) -> float:
    """α_{k+1}/α_k = (k/(k+1))^{k/2}·(1/(k+1))^{1/2}."""
    if k < 1:
        raise DomainError('k должно быть ≥ 1')
    return float(np.exp(0.5 * k * np.log(k / (k + 1.0)) - 0.5 * np.log(k + 1.0)))


def alpha_coeff(n: int) -> float:
    """α_0 = α_1 = 1, α_n = Π_{k=2}^n (1−1/k)^{(k−1)/2}(1/k)^{1/2}."""
    if n < 0:
        raise DomainError('n должно быть ≥ 0')
    if n < 2:
        return 1.0
    k = np.arange(2, n + 1, dtype=float)
    return float(np.exp(np.sum(0.5 * (k - 1.0) * np.log1p(-1.0 / k) - 0.5 * np.log(k))))


def log_factorial(n) -> float:
    return special.gammaln(np.asarray(n, dtype=float) + 1.0)


# ---------- ГЕОМЕТРИЯ ----------

def unit_ball_volume(d: int) -> float:
    """ω_d = π^{d/2}/Γ(d/2+1)."""
    return float(np.exp(0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d + 1.0)))


def sphere_area(d: int) -> float:
    """σ_{d−1} = 2π^{d/2}/Γ(d/2): площадь единичной сферы в ℝ^d."""
    return float(2.0 * np.exp(0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d)))
