# quadrature.py
"""
Квадратурные правила: Гаусс–Лежандр на отрезке и в тензорном боксе,
Гаусс–Эрмит под стандартную нормаль, панели по u = √s для интегралов
с особенностью s^{-1/2} в нуле.
"""
from functools import lru_cache
import itertools

import numpy as np
from scipy import special

from errors import DomainError


@lru_cache(maxsize=128)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = special.roots_legendre(n)
    return x, w


@lru_cache(maxsize=64)
def _hermite(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = special.roots_hermite(m)
    # под плотность N(0,1): z = √2 x, веса / √π
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise DomainError('число узлов должно быть ≥ 1')
    x, w = _legendre(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tensor_legendre(n: int, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Тензорное правило в боксе [lo, hi] ⊂ ℝ^d: точки (n^d, d) и веса (n^d,)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [gauss_legendre(n, a, b) for a, b in zip(lo, hi)]
    pts = np.array(list(itertools.product(*[ax[0] for ax in axes])))
    wts = np.prod(np.array(list(itertools.product(*[ax[1] for ax in axes]))), axis=1)
    return pts.reshape(-1, lo.size), wts


def gauss_hermite_normal(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Узлы и веса для E f(Z), Z ~ N(0,1)."""
    if m < 1:
        raise DomainError('число узлов должно быть ≥ 1')
    return _hermite(int(m))


def tensor_hermite(m: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """E f(Z), Z ~ N(0, I_d): точки (m^d, d), веса (m^d,)."""
    z, w = gauss_hermite_normal(m)
    pts = np.array(list(itertools.product(z, repeat=d))).reshape(-1, d)
    wts = np.prod(np.array(list(itertools.product(w, repeat=d))).reshape(-1, d), axis=1)
    return pts, wts


def sqrt_time_panels(t: float, n_panels: int = 24, n_nodes: int = 6) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Узлы для ∫_0^t F(s) ds после замены s = u²: ds = 2u du, u ∈ [0, √t].
    Отрезок по u режется геометрически к нулю (панели [√t 2^{-j-1}, √t 2^{-j}]).

    Возвращает (s-узлы, веса с множителем 2u, u_min): хвост [0, u_min]
    не покрыт, вызывающий код оценивает его сам.
    """
    if t <= 0.0:
        raise DomainError('t должно быть > 0')
    root = np.sqrt(t)
    s_all, w_all = [], []
    for j in range(n_panels):
        a, b = root * 2.0 ** (-j - 1), root * 2.0 ** (-j)
        u, w = gauss_legendre(n_nodes, a, b)
        s_all.append(u * u)
        w_all.append(2.0 * u * w)
    return np.concatenate(s_all), np.concatenate(w_all), root * 2.0 ** (-n_panels)


def split_time_rule(t: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Правило для ∫_0^t F(s) ds, где F имеет особенности вида s^{-1/2} у нуля
    и (t−s)^{-1/2} у t: разрез в t/2 и квадратичные замены на каждой половине.
    """
    half = np.sqrt(0.5 * t)
    u, w = gauss_legendre(n_nodes, 0.0, half)
    s_left, w_left = u * u, 2.0 * u * w
    s_right, w_right = t - u * u, 2.0 * u * w
    return np.concatenate([s_left, s_right]), np.concatenate([w_left, w_right])
