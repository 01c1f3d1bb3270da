# measures.py
"""
Меры сноса класса Като: представления (плотность, произведение Лебега на
канторову меру, взвешенная сумма, гиперплоскость), сглаживание φ_n * μ,
нормы N_t^α и Λ_t, профиль принадлежности K_{d,1}.

Соглашения:
  * точки: массивы (N, d), одиночная точка: (d,);
  * integrate_gaussian(x, s, α) = ∫ exp(−α|x−y|²/s) μ(dy): общий
    пространственный множитель для N_t^α и для Λ_t с гауссовыми ядрами;
  * методы, названные *_abs в аргументах, ждут неотрицательную меру
    (результат total_variation()).
"""
from dataclasses import dataclass, field
from functools import lru_cache, partial
import logging

import numpy as np
from scipy import integrate, special

from errors import DomainError, QuadratureError
from extensions import parallel_map
from kernels import gaussian_p, sphere_area
from models import FLAG_ENVELOPE_TV, FLAG_NOT_KATO, FLAG_OUTSIDE_THEORY, KatoProfile
from quadrature import gauss_legendre, sqrt_time_panels, tensor_legendre

logger = logging.getLogger(__name__)

CANTOR_GAMMA = np.log(2.0) / np.log(3.0)
GAUSS_WINDOW = 8.0          # полуширина окна в единицах σ гауссова множителя
DENSITY_NODES = 20          # узлов Гаусса–Лежандра на ось для плотностей
MOLLIFY_RTOL = 1e-5


def _points(x, d: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != d:
        raise DomainError(f'ожидались точки размерности {d}, получено {pts.shape}')
    return pts


# ---------- МОЛЛИФАЙЕР ----------

def _bump(r2):
    inside = r2 < 1.0
    out = np.zeros_like(r2, dtype=float)
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=16)
def _bump_normalizer(d: int) -> float:
    radial, _ = integrate.quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r ** (d - 1), 0.0, 1.0,
                               epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(d) * radial


@lru_cache(maxsize=16)
def _marginal_table(d: int, size: int = 401) -> tuple[np.ndarray, np.ndarray]:
    """
    ψ(u) = ∫_{ℝ^{d−1}} φ(u, w) dw на сетке u ∈ [0, 1] (ψ чётна).
    Для d = 1 это сам φ.
    """
    u = np.linspace(0.0, 1.0, size)
    z = _bump_normalizer(d)
    if d == 1:
        return u, _bump(u * u) / z
    area = sphere_area(d - 1)
    vals = np.zeros(size)
    for i, ui in enumerate(u[:-1]):
        top = np.sqrt(1.0 - ui * ui)
        vals[i], _ = integrate.quad(
            lambda rho: np.exp(-1.0 / (1.0 - ui * ui - rho * rho)) * rho ** (d - 2) if ui * ui + rho * rho < 1.0 else 0.0,
            0.0, top, limit=200,
        )
    return u, area * vals / z


@dataclass(frozen=True)
class Mollifier:
    """φ_n(x) = 2^{nd} φ(2^n x), φ: нормированная шапочка exp(−1/(1−|x|²)) в единичном шаре."""
    d: int
    level: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise DomainError('уровень сглаживания должен быть ≥ 0')

    @property
    def radius(self) -> float:
        return 2.0 ** (-self.level)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        scale = 2.0 ** self.level
        r2 = np.sum((scale * x) ** 2, axis=-1)
        return scale ** self.d * _bump(r2) / _bump_normalizer(self.d)

    def marginal(self, u) -> np.ndarray:
        """Одномерная маргиналь φ_n вдоль любой оси."""
        grid, vals = _marginal_table(self.d)
        scale = 2.0 ** self.level
        return scale * np.interp(np.abs(scale * np.asarray(u, dtype=float)), grid, vals, right=0.0)

    def unit_mass(self, nodes: int = 24) -> float:
        r = self.radius
        pts, w = tensor_legendre(nodes, [-r] * self.d, [r] * self.d)
        return float(np.sum(w * self(pts)))


# ---------- КАНТОРОВА РЕКУРСИЯ ----------

def cantor_cdf(u) -> np.ndarray:
    """Функция распределения канторовой меры на [0,1]: F(u) = ½F(3u) | ½ | ½ + ½F(3u−2)."""
    u = np.atleast_1d(np.asarray(u, dtype=float)).copy()
    acc = np.zeros_like(u)
    scale = np.ones_like(u)
    active = np.ones(u.shape, dtype=bool)
    for _ in range(60):
        if not active.any():
            break
        low = active & (u <= 0.0)
        high = active & (u >= 1.0)
        acc[high] += scale[high]
        active &= ~(low | high)
        left = active & (u < 1.0 / 3.0)
        mid = active & (u >= 1.0 / 3.0) & (u <= 2.0 / 3.0)
        right = active & (u > 2.0 / 3.0)
        acc[mid] += 0.5 * scale[mid]
        active &= ~mid
        acc[right] += 0.5 * scale[right]
        u[left] *= 3.0
        u[right] = 3.0 * u[right] - 2.0
        scale[left | right] *= 0.5
    return acc


def cantor_cells(lo: float, hi: float, max_len: float, keep=None) -> tuple[np.ndarray, float, int]:
    """
    Ячейки канторова множества на [lo, hi] до длины ≤ max_len.
    keep(left, length) -> маска отбрасывает далёкие ячейки на каждом уровне.
    Возвращает (левые концы, длина, уровень); масса ячейки 2^{-уровень}.
    """
    left = np.array([lo], dtype=float)
    length = hi - lo
    level = 0
    while length > max_len and left.size:
        length /= 3.0
        left = np.concatenate([left, left + 2.0 * length])
        level += 1
        if keep is not None:
            left = left[keep(left, length)]
    return np.sort(left), length, level


# ---------- БАЗОВЫЙ КЛАСС ----------

class SignedMeasure:
    """Конечная на компактах знаковая мера на ℝ^d."""
    d: int = 1

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def has_density(self) -> bool:
        return False

    def total_variation(self) -> 'SignedMeasure':
        raise NotImplementedError

    def support_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        return None

    def integrate_gaussian(self, x, s: float, alpha: float) -> float:
        raise NotImplementedError

    def integrate(self, g, lo, hi, nodes: int = 12) -> float:
        """∫ g dμ для ограниченной g с носителем в боксе [lo, hi]."""
        raise NotImplementedError

    def mollify(self, level: int, points) -> np.ndarray:
        raise NotImplementedError

    def kato_ball_integral(self, x, r: float) -> float:
        """∫_{|x−y|≤r} μ(dy)/|x−y|^{d−1} для неотрицательной μ."""
        raise NotImplementedError

    def density_values(self, points) -> np.ndarray:
        raise DomainError(f'{type(self).__name__} не имеет плотности; нужен уровень сглаживания')

    def sample(self, n: int, rng: np.random.Generator, lo, hi) -> tuple[np.ndarray, float]:
        """n точек из |μ| на боксе [lo, hi] и масса |μ|([lo, hi])."""
        raise NotImplementedError

    def mollified_sup(self, level: int | None) -> float | None:
        """sup|φ_n * μ| если известен, иначе None."""
        return None

    def profile_grid(self) -> np.ndarray:
        box = self.support_box()
        lo, hi = box if box is not None else (-np.ones(self.d), np.ones(self.d))
        axes = [np.linspace(a, b, 3) for a, b in zip(lo, hi)]
        return np.array(np.meshgrid(*axes, indexing='ij')).reshape(self.d, -1).T

    def __mul__(self, c: float) -> 'SignedMeasure':
        return WeightedSum([(float(c), self)])

    __rmul__ = __mul__


# ---------- ПЛОТНОСТИ ----------

class Density(SignedMeasure):
    """
    μ(dy) = f(y) dy. f: векторизованная функция (N, d) -> (N,);
    box: бокс, вне которого f = 0 (None: носитель неограничен).
    """

    def __init__(self, f, d: int, box=None, sup: float | None = None,
                 constant: float | None = None, name: str = 'density'):
        self.f = f
        self.d = int(d)
        self.box = None if box is None else (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
        self.sup = sup
        self.constant = constant
        self.name = name

    @classmethod
    def constant_density(cls, c: float, d: int) -> 'Density':
        return cls(lambda y: np.full(np.atleast_2d(y).shape[0], float(c)), d,
                   sup=abs(c), constant=float(c), name='constant')

    @classmethod
    def lebesgue(cls, d: int) -> 'Density':
        return cls.constant_density(1.0, d)

    @classmethod
    def linear(cls, coef, offset: float = 0.0, half_width: float = 10.0) -> 'Density':
        """f(y) = a·y + c внутри куба [−L, L]^d (компонента поля Орнштейна–Уленбека)."""
        coef = np.asarray(coef, dtype=float)
        d = coef.size
        lo, hi = -half_width * np.ones(d), half_width * np.ones(d)

        def f(y):
            y = np.atleast_2d(y)
            inside = np.all((y >= lo) & (y <= hi), axis=1)
            return np.where(inside, y @ coef + offset, 0.0)
        sup = float(np.sum(np.abs(coef)) * half_width + abs(offset))
        return cls(f, d, box=(lo, hi), sup=sup, name='linear')

    @classmethod
    def power_singular(cls, center, beta: float, radius: float = 1.0, height: float = 1.0) -> 'Density':
        """h·|y−c|^{−β} в шаре B(c, R): из L^p при βp < d."""
        center = np.asarray(center, dtype=float)

        def f(y):
            r = np.linalg.norm(np.atleast_2d(y) - center, axis=1)
            with np.errstate(divide='ignore'):
                vals = height * np.where(r > 0.0, r, np.inf) ** (-beta)
            return np.where(r <= radius, vals, 0.0)
        return cls(f, center.size, box=(center - radius, center + radius), sup=None, name='power_singular')

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0

    @property
    def has_density(self) -> bool:
        return True

    def density_values(self, points) -> np.ndarray:
        return np.asarray(self.f(_points(points, self.d)), dtype=float)

    def total_variation(self) -> 'Density':
        if self.constant is not None:
            return Density.constant_density(abs(self.constant), self.d)
        f = self.f
        return Density(lambda y: np.abs(f(y)), self.d, box=self.box, sup=self.sup, name=f'|{self.name}|')

    def support_box(self):
        return self.box

    def _window(self, lo, hi):
        if self.box is None:
            return lo, hi
        lo, hi = np.maximum(lo, self.box[0]), np.minimum(hi, self.box[1])
        if np.any(hi <= lo):
            return None
        return lo, hi

    def integrate(self, g, lo, hi, nodes: int = DENSITY_NODES) -> float:
        win = self._window(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if win is None:
            return 0.0
        pts, w = tensor_legendre(nodes, *win)
        return float(np.sum(w * g(pts) * self.f(pts)))

    def integrate_gaussian(self, x, s: float, alpha: float) -> float:
        x = np.asarray(x, dtype=float)
        if self.constant is not None:
            return float(self.constant * (np.pi * s / alpha) ** (0.5 * self.d))
        half = GAUSS_WINDOW * np.sqrt(s / (2.0 * alpha))
        return self.integrate(lambda y: np.exp(-alpha * np.sum((y - x) ** 2, axis=1) / s),
                              x - half, x + half)

    def _mollify_rule(self, level: int, points: np.ndarray, nodes: int) -> np.ndarray:
        moll = Mollifier(self.d, level)
        r = moll.radius
        z, w = tensor_legendre(nodes, [-r] * self.d, [r] * self.d)
        wz = w * moll(z)
        keep = wz > 0.0
        z, wz = z[keep], wz[keep]
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], 256):
            chunk = points[start:start + 256]
            vals = self.f((chunk[:, None, :] - z[None, :, :]).reshape(-1, self.d)).reshape(chunk.shape[0], -1)
            # нормировка на дискретную массу: константы сохраняются точно
            out[start:start + 256] = vals @ wz / wz.sum()
        return out

    def mollify(self, level: int, points) -> np.ndarray:
        pts = _points(points, self.d)
        if self.constant is not None:
            return np.full(pts.shape[0], self.constant)
        coarse = self._mollify_rule(level, pts, 16)
        fine = self._mollify_rule(level, pts, 24)
        residual = float(np.max(np.abs(fine - coarse)))
        scale = max(1.0, float(np.max(np.abs(fine))))
        if not np.isfinite(residual) or residual > MOLLIFY_RTOL * scale:
            raise QuadratureError(f'сглаживание {self.name} на уровне {level} не сошлось', residual)
        return fine

    def mollified_sup(self, level):
        return self.sup

    def kato_ball_integral(self, x, r: float, nodes: int = 16) -> float:
        # в полярных координатах ρ^{d−1} сокращается с |x−y|^{−(d−1)}
        x = np.asarray(x, dtype=float)
        dirs, dw = _sphere_rule(self.d)
        v, vw = gauss_legendre(nodes, 0.0, 1.0)
        rho, rw = r * v * v, 2.0 * r * v * vw
        pts = x[None, None, :] + rho[:, None, None] * dirs[None, :, :]
        vals = self.f(pts.reshape(-1, self.d)).reshape(rho.size, -1)
        return float(rw @ vals @ dw)

    def sample(self, n, rng, lo, hi):
        win = self._window(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if win is None:
            return np.empty((0, self.d)), 0.0
        lo, hi = win
        pts, w = tensor_legendre(DENSITY_NODES, lo, hi)
        vals = np.abs(self.f(pts))
        mass = float(np.sum(w * vals))
        ceiling = self.sup if self.sup is not None else 2.0 * float(vals.max())
        out = []
        got = 0
        while got < n:
            cand = rng.uniform(lo, hi, size=(2 * n, self.d))
            acc = cand[rng.uniform(0.0, ceiling, size=2 * n) < np.abs(self.f(cand))]
            out.append(acc)
            got += acc.shape[0]
        return np.concatenate(out)[:n], mass

    def __repr__(self) -> str:
        return f'<Density {self.name} d={self.d}>'


class GaussianBump(Density):
    """f(y) = h·exp(−|y−c|²/2σ²); гауссов интеграл берётся в замкнутом виде."""

    def __init__(self, center, sigma: float, height: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.sigma = float(sigma)
        self.height = float(height)
        c, s2, h = self.center, self.sigma ** 2, self.height

        def f(y):
            return h * np.exp(-np.sum((np.atleast_2d(y) - c) ** 2, axis=1) / (2.0 * s2))
        half = GAUSS_WINDOW * self.sigma
        super().__init__(f, self.center.size, box=(c - half, c + half), sup=abs(h), name='gaussian_bump')

    def total_variation(self) -> 'GaussianBump':
        return GaussianBump(self.center, self.sigma, abs(self.height))

    def integrate_gaussian(self, x, s: float, alpha: float) -> float:
        a = alpha / s
        b = 1.0 / (2.0 * self.sigma ** 2)
        r2 = float(np.sum((np.asarray(x, dtype=float) - self.center) ** 2))
        return float(self.height * (np.pi / (a + b)) ** (0.5 * self.d) * np.exp(-a * b * r2 / (a + b)))

    def __repr__(self) -> str:
        return f'<GaussianBump c={self.center.tolist()} σ={self.sigma} h={self.height}>'


@lru_cache(maxsize=16)
def _sphere_rule(d: int, n: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Направления и веса для ∫_{S^{d−1}} g dσ."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        ang = 2.0 * np.pi * (np.arange(4 * n) + 0.5) / (4 * n)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), np.full(4 * n, 2.0 * np.pi / (4 * n))
    if d == 3:
        c, cw = gauss_legendre(n, -1.0, 1.0)
        ang = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
        sn = np.sqrt(1.0 - c * c)
        dirs = np.stack([
            np.outer(sn, np.cos(ang)).ravel(),
            np.outer(sn, np.sin(ang)).ravel(),
            np.repeat(c, ang.size),
        ], axis=1)
        return dirs, np.repeat(cw, ang.size) * (2.0 * np.pi / ang.size)
    rng = np.random.default_rng(20240601 + d)
    g = rng.standard_normal((4096, d))
    dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    return dirs, np.full(4096, sphere_area(d) / 4096)


# ---------- КАНТОР × ЛЕБЕГ ----------

class CantorProduct(SignedMeasure):
    """
    w · Leb^{d−1} ⊗ μ_C на кубе [lo, hi]^d: по оси axis: канторова мера
    на [lo, hi] (полная масса 1), по остальным осям: Лебег на [lo, hi].
    μ(B(x,r)) ≤ κ r^{d−1+γ}, γ = log2/log3.
    """

    def __init__(self, axis: int, weight: float, lo: float, hi: float, d: int):
        if not 0 <= axis < d:
            raise DomainError(f'ось {axis} вне 0..{d - 1}')
        if hi <= lo:
            raise DomainError('пустой бокс канторовой меры')
        self.axis, self.weight, self.lo, self.hi, self.d = int(axis), float(weight), float(lo), float(hi), int(d)
        self._tables = {}

    @property
    def is_zero(self) -> bool:
        return self.weight == 0.0

    @property
    def lateral(self) -> list[int]:
        return [i for i in range(self.d) if i != self.axis]

    def total_variation(self) -> 'CantorProduct':
        return CantorProduct(self.axis, abs(self.weight), self.lo, self.hi, self.d)

    def support_box(self):
        return np.full(self.d, self.lo), np.full(self.d, self.hi)

    def axis_mass(self, a: float, b: float) -> float:
        """μ_C([a, b]) по оси."""
        span = self.hi - self.lo
        fa, fb = cantor_cdf([(a - self.lo) / span, (b - self.lo) / span])
        return float(fb - fa)

    def _lateral_gaussian(self, x, s, alpha) -> float:
        k = np.sqrt(alpha / s)
        out = 1.0
        for i in self.lateral:
            out *= 0.5 * np.sqrt(np.pi) / k * (special.erf(k * (self.hi - x[i])) - special.erf(k * (self.lo - x[i])))
        return float(out)

    def integrate_gaussian(self, x, s, alpha) -> float:
        x = np.asarray(x, dtype=float)
        sigma = np.sqrt(s / (2.0 * alpha))
        xa = x[self.axis]
        reach = (GAUSS_WINDOW + 1.0) * sigma

        def keep(left, length):
            return (left - reach <= xa) & (left + length + reach >= xa)
        left, length, level = cantor_cells(self.lo, self.hi, sigma / 16.0, keep)
        if left.size == 0:
            return 0.0
        mid = left + 0.5 * length
        axis_part = np.sum(np.exp(-alpha * (mid - xa) ** 2 / s)) * 2.0 ** (-level)
        return self.weight * float(axis_part) * self._lateral_gaussian(x, s, alpha)

    def integrate(self, g, lo, hi, nodes: int = 12) -> float:
        lo = np.maximum(np.asarray(lo, dtype=float), self.lo)
        hi = np.minimum(np.asarray(hi, dtype=float), self.hi)
        if np.any(hi <= lo):
            return 0.0
        a, b = lo[self.axis], hi[self.axis]
        scale = float(np.min(hi - lo))

        def keep(left, length):
            return (left + length >= a) & (left <= b)
        left, length, level = cantor_cells(self.lo, self.hi, scale / 64.0, keep)
        mid = left + 0.5 * length
        mid = mid[(mid >= a) & (mid <= b)]
        if mid.size == 0:
            return 0.0
        lat = self.lateral
        if lat:
            pts_l, w_l = tensor_legendre(nodes, lo[lat], hi[lat])
        else:
            pts_l, w_l = np.zeros((1, 0)), np.ones(1)
        pts = np.empty((mid.size * w_l.size, self.d))
        pts[:, self.axis] = np.repeat(mid, w_l.size)
        if lat:
            pts[:, lat] = np.tile(pts_l, (mid.size, 1))
        vals = g(pts).reshape(mid.size, w_l.size)
        return self.weight * 2.0 ** (-level) * float(np.sum(vals @ w_l))

    # --- сглаживание ---

    def _axis_profile(self, level: int, u: np.ndarray) -> np.ndarray:
        """Σ_ячейки 2^{-L} ψ_n(u − m): сглаживание вдоль оси при внутренних боковых координатах."""
        moll = Mollifier(self.d, level)
        left, length, lvl = cantor_cells(self.lo, self.hi, moll.radius / 8.0)
        mid = left + 0.5 * length
        out = np.zeros(u.size)
        for start in range(0, u.size, 2048):
            block = u[start:start + 2048]
            out[start:start + 2048] = moll.marginal(block[:, None] - mid[None, :]).sum(axis=1)
        return out * 2.0 ** (-lvl)

    def _table(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        if level not in self._tables:
            r = 2.0 ** (-level)
            step = r / 64.0
            grid = np.arange(self.lo - r, self.hi + r + step, step)
            self._tables[level] = (grid, self._axis_profile(level, grid))
        return self._tables[level]

    def _mollify_edge(self, level: int, x: np.ndarray, nodes: int = 12) -> float:
        moll = Mollifier(self.d, level)
        r = moll.radius
        lo = np.maximum(x - r, self.lo)
        hi = np.minimum(x + r, self.hi)
        if np.any(hi <= lo):
            return 0.0
        return self.integrate(lambda y: moll(x[None, :] - y), lo, hi, nodes) / self.weight if self.weight else 0.0

    def mollify(self, level: int, points) -> np.ndarray:
        pts = _points(points, self.d)
        if self.weight == 0.0:
            return np.zeros(pts.shape[0])
        r = 2.0 ** (-level)
        grid, table = self._table(level)
        out = np.interp(pts[:, self.axis], grid, table, left=0.0, right=0.0)
        lat = self.lateral
        if lat:
            lp = pts[:, lat]
            interior = np.all((lp >= self.lo + r) & (lp <= self.hi - r), axis=1)
            outside = np.any((lp < self.lo - r) | (lp > self.hi + r), axis=1)
            out[outside] = 0.0
            for i in np.flatnonzero(~interior & ~outside):
                out[i] = self._mollify_edge(level, pts[i])
        return self.weight * out

    def mollified_sup(self, level):
        if level is None:
            return None
        return abs(self.weight) * float(np.max(self._table(level)[1]))

    # --- профиль Като ---

    def _slice_kernel(self, a: np.ndarray, r: float) -> np.ndarray:
        """∫ по боковым координатам (ρ² + a²)^{−(d−1)/2} на {ρ² + a² ≤ r²}."""
        z = np.clip(r / a, 1.0, None)
        if self.d == 2:
            return 2.0 * np.arccosh(z)
        if self.d == 3:
            return 2.0 * np.pi * np.log(z)
        area = sphere_area(self.d - 1)
        return area * np.array([
            integrate.quad(lambda w: np.tanh(w) ** (self.d - 2), 0.0, np.arccosh(zi))[0] for zi in z
        ])

    def kato_ball_integral(self, x, r: float) -> float:
        x = np.asarray(x, dtype=float)
        xa = x[self.axis]
        if self.d == 1:
            return abs(self.weight) * self.axis_mass(xa - r, xa + r)
        floor = r * 1e-6
        # адаптивное дробление: ячейка готова, когда она мала относительно расстояния до x
        left = np.array([self.lo])
        length = self.hi - self.lo
        level = 0
        total = 0.0
        while left.size:
            dist = np.maximum(np.maximum(left - xa, xa - left - length), 0.0)
            near = dist <= r
            left, dist = left[near], dist[near]
            done = (length <= 0.1 * dist) | (length <= floor)
            if done.any():
                mid = left[done] + 0.5 * length
                a = np.maximum(np.abs(mid - xa), 0.25 * length)
                total += 2.0 ** (-level) * float(np.sum(self._slice_kernel(a, r)))
            left = left[~done]
            length /= 3.0
            left = np.concatenate([left, left + 2.0 * length])
            level += 1
        return abs(self.weight) * total

    def profile_grid(self) -> np.ndarray:
        left, length, _ = cantor_cells(self.lo, self.hi, (self.hi - self.lo) / 27.0)
        ends = np.unique(np.concatenate([left, left + length]))
        pts = np.full((ends.size, self.d), 0.5 * (self.lo + self.hi))
        pts[:, self.axis] = ends
        return pts

    def sample(self, n, rng, lo, hi):
        lo = np.maximum(np.asarray(lo, dtype=float), self.lo)
        hi = np.minimum(np.asarray(hi, dtype=float), self.hi)
        if np.any(hi <= lo):
            return np.empty((0, self.d)), 0.0
        a, b = lo[self.axis], hi[self.axis]
        frac = self.axis_mass(a, b)
        lat = self.lateral
        mass = abs(self.weight) * frac * float(np.prod(hi[lat] - lo[lat])) if lat else abs(self.weight) * frac
        if frac == 0.0:
            return np.empty((0, self.d)), 0.0
        span = b - a

        def keep(left, length):
            return (left + length >= a) & (left <= b)
        left, length, _ = cantor_cells(self.lo, self.hi, span / 81.0, keep)
        out = []
        got = 0
        while got < n:
            cells = left[rng.integers(0, left.size, size=2 * n)]
            digits = rng.integers(0, 2, size=(2 * n, 40))
            frac_pos = (2.0 * digits * 3.0 ** -np.arange(1, 41)).sum(axis=1)
            u = cells + length * frac_pos
            u = u[(u >= a) & (u <= b)]
            out.append(u)
            got += u.size
        u = np.concatenate(out)[:n]
        pts = np.empty((n, self.d))
        pts[:, self.axis] = u
        if lat:
            pts[:, lat] = rng.uniform(lo[lat], hi[lat], size=(n, len(lat)))
        return pts, mass

    def __repr__(self) -> str:
        return f'<CantorProduct axis={self.axis} w={self.weight} box=[{self.lo},{self.hi}]^{self.d}>'


# ---------- ГИПЕРПЛОСКОСТЬ (γ = 0) ----------

class Hyperplane(SignedMeasure):
    """Поверхностная мера {y_axis = position} в кубе [lo, hi]^d. Граничный случай γ = 0."""

    def __init__(self, axis: int, position: float, weight: float, lo: float, hi: float, d: int):
        self.axis, self.position, self.weight = int(axis), float(position), float(weight)
        self.lo, self.hi, self.d = float(lo), float(hi), int(d)

    def total_variation(self) -> 'Hyperplane':
        return Hyperplane(self.axis, self.position, abs(self.weight), self.lo, self.hi, self.d)

    def support_box(self):
        lo, hi = np.full(self.d, self.lo), np.full(self.d, self.hi)
        lo[self.axis] = hi[self.axis] = self.position
        return lo, hi

    def integrate_gaussian(self, x, s, alpha) -> float:
        x = np.asarray(x, dtype=float)
        k = np.sqrt(alpha / s)
        out = self.weight * np.exp(-alpha * (x[self.axis] - self.position) ** 2 / s)
        for i in range(self.d):
            if i != self.axis:
                out *= 0.5 * np.sqrt(np.pi) / k * (special.erf(k * (self.hi - x[i])) - special.erf(k * (self.lo - x[i])))
        return float(out)

    def kato_ball_integral(self, x, r: float) -> float:
        a = abs(float(np.asarray(x)[self.axis]) - self.position)
        if a >= r:
            return 0.0
        if a == 0.0:
            return float('inf')
        return abs(self.weight) * float(CantorProduct(self.axis, 1.0, self.lo, self.hi, self.d)._slice_kernel(np.array([a]), r)[0])

    def profile_grid(self) -> np.ndarray:
        pts = np.full((1, self.d), 0.5 * (self.lo + self.hi))
        pts[:, self.axis] = self.position
        return pts

    def mollify(self, level, points) -> np.ndarray:
        pts = _points(points, self.d)
        moll = Mollifier(self.d, level)
        lat = [i for i in range(self.d) if i != self.axis]
        out = np.zeros(pts.shape[0])
        for j, x in enumerate(pts):
            lo = np.maximum(x[lat] - moll.radius, self.lo)
            hi = np.minimum(x[lat] + moll.radius, self.hi)
            if np.any(hi <= lo) or abs(x[self.axis] - self.position) >= moll.radius:
                continue
            yl, w = tensor_legendre(12, lo, hi) if lat else (np.zeros((1, 0)), np.ones(1))
            y = np.empty((w.size, self.d))
            y[:, self.axis] = self.position
            if lat:
                y[:, lat] = yl
            out[j] = float(np.sum(w * moll(x[None, :] - y)))
        return self.weight * out

    def __repr__(self) -> str:
        return f'<Hyperplane axis={self.axis} at={self.position} w={self.weight}>'


# ---------- ВЗВЕШЕННАЯ СУММА ----------

class WeightedSum(SignedMeasure):

    def __init__(self, terms):
        self.terms = [(float(c), m) for c, m in terms]
        if not self.terms:
            raise DomainError('пустая сумма мер')
        dims = {m.d for _, m in self.terms}
        if len(dims) != 1:
            raise DomainError(f'слагаемые разной размерности: {sorted(dims)}')
        self.d = dims.pop()
        self.exact_total_variation = True

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 or m.is_zero for c, m in self.terms)

    @property
    def has_density(self) -> bool:
        return all(m.has_density for _, m in self.terms)

    def density_values(self, points) -> np.ndarray:
        return sum(c * m.density_values(points) for c, m in self.terms)

    def total_variation(self) -> SignedMeasure:
        if self.has_density:
            boxes = [m.support_box() for _, m in self.terms]
            box = None
            if all(b is not None for b in boxes):
                box = (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))
            sups = [m.sup for _, m in self.terms]
            sup = None if any(s is None for s in sups) else sum(abs(c) * s for (c, _), s in zip(self.terms, sups))
            return Density(lambda y: np.abs(self.density_values(y)), self.d, box=box, sup=sup, name='|sum|')
        env = WeightedSum([(abs(c), m.total_variation()) for c, m in self.terms])
        env.exact_total_variation = False
        return env

    def support_box(self):
        boxes = [m.support_box() for _, m in self.terms]
        if any(b is None for b in boxes):
            return None
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def integrate_gaussian(self, x, s, alpha) -> float:
        return sum(c * m.integrate_gaussian(x, s, alpha) for c, m in self.terms if c != 0.0)

    def integrate(self, g, lo, hi, nodes: int = 12) -> float:
        return sum(c * m.integrate(g, lo, hi, nodes) for c, m in self.terms if c != 0.0)

    def mollify(self, level, points) -> np.ndarray:
        pts = _points(points, self.d)
        return sum((c * m.mollify(level, pts) for c, m in self.terms if c != 0.0), np.zeros(pts.shape[0]))

    def kato_ball_integral(self, x, r) -> float:
        return sum(c * m.kato_ball_integral(x, r) for c, m in self.terms if c != 0.0)

    def mollified_sup(self, level):
        sups = [m.mollified_sup(level) for _, m in self.terms]
        if any(s is None for s in sups):
            return None
        return sum(abs(c) * s for (c, _), s in zip(self.terms, sups))

    def profile_grid(self) -> np.ndarray:
        return np.vstack([m.profile_grid() for _, m in self.terms])

    def sample(self, n, rng, lo, hi):
        parts = [m.sample(n, rng, lo, hi) for _, m in self.terms]
        masses = np.array([abs(c) * mass for (c, _), (_, mass) in zip(self.terms, parts)])
        total = float(masses.sum())
        if total == 0.0:
            return np.empty((0, self.d)), 0.0
        counts = rng.multinomial(n, masses / total)
        pts = np.vstack([p[:k] for (p, _), k in zip(parts, counts)])
        return pts, total

    def __repr__(self) -> str:
        return f'<WeightedSum terms={len(self.terms)} d={self.d}>'


# ---------- ВЕКТОР СНОСА ----------

class DriftMeasure:
    """μ = (μ_1, …, μ_d): поле сноса как вектор знаковых мер."""

    def __init__(self, components, name: str = 'drift', params: dict | None = None):
        self.components = list(components)
        self.params = dict(params or {})
        self.d = len(self.components)
        if self.d < 1:
            raise DomainError('нужна хотя бы одна компонента')
        if any(m.d != self.d for m in self.components):
            raise DomainError('размерность компонент должна совпадать с их числом')
        self.name = name

    # --- конструкторы ---

    @classmethod
    def zero(cls, d: int) -> 'DriftMeasure':
        return cls([Density.constant_density(0.0, d) for _ in range(d)], name='zero')

    @classmethod
    def constant(cls, c) -> 'DriftMeasure':
        c = np.asarray(c, dtype=float)
        return cls([Density.constant_density(ci, c.size) for ci in c], name='constant', params={'vector': c.tolist()})

    @classmethod
    def ornstein_uhlenbeck(cls, gamma: float, d: int, half_width: float = 10.0) -> 'DriftMeasure':
        """b(x) = −γx в кубе [−L, L]^d."""
        return cls([Density.linear(-gamma * np.eye(d)[i], 0.0, half_width) for i in range(d)], name='ou',
                   params={'gamma': float(gamma), 'half_width': half_width})

    @classmethod
    def bump(cls, center, sigma: float, height: float, direction) -> 'DriftMeasure':
        """b(x) = h·exp(−|x−c|²/2σ²)·e."""
        direction = np.asarray(direction, dtype=float)
        return cls([GaussianBump(center, sigma, height * e) for e in direction], name='bump',
                   params={'center': list(map(float, center)), 'sigma': float(sigma), 'height': float(height),
                           'direction': direction.tolist()})

    # --- свойства ---

    @property
    def is_zero(self) -> bool:
        return all(m.is_zero for m in self.components)

    @property
    def has_density(self) -> bool:
        return all(m.has_density for m in self.components)

    @property
    def is_constant(self) -> bool:
        return all(isinstance(m, Density) and m.constant is not None for m in self.components)

    def constant_vector(self) -> np.ndarray:
        return np.array([m.constant for m in self.components], dtype=float)

    def abs_sum(self) -> SignedMeasure:
        """Σ_i |μ_i| как неотрицательная мера."""
        return WeightedSum([(1.0, m.total_variation()) for m in self.components])

    def theory_flags(self) -> list[str]:
        return [FLAG_OUTSIDE_THEORY] if self.d < 3 else []

    def sup_bound(self, level: int | None = None) -> float | None:
        """Оценка sup|b^{(n)}| (евклидова норма) или None."""
        sups = [m.mollified_sup(level) for m in self.components]
        if any(s is None for s in sups):
            return None
        return float(np.sqrt(np.sum(np.square(sups))))

    def field(self, points, level: int | None = None) -> np.ndarray:
        """b^{(n)} в точках (N, d); level None: прямо плотность (только для абсолютно непрерывных мер)."""
        pts = _points(points, self.d)
        cols = []
        for m in self.components:
            if m.is_zero:
                cols.append(np.zeros(pts.shape[0]))
            elif level is None:
                cols.append(m.density_values(pts))
            else:
                cols.append(m.mollify(level, pts))
        return np.stack(cols, axis=1)

    def scaled(self, lam: float) -> 'DriftMeasure':
        return DriftMeasure([WeightedSum([(lam, m)]) for m in self.components], name=f'{lam}*{self.name}')

    def __repr__(self) -> str:
        return f'<DriftMeasure {self.name} d={self.d}>'


def mollified_drift(mu: DriftMeasure, n: int, x) -> np.ndarray:
    """(b^{(n)}_1(x), …, b^{(n)}_d(x)), b^{(n)}_i = φ_n * μ_i."""
    if n < 0:
        raise DomainError('уровень сглаживания должен быть ≥ 0')
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError('точка должна быть конечной')
    return mu.field(x.reshape(1, -1), n)[0]


# ---------- НОРМЫ КАТО ----------

@dataclass
class KatoNorm:
    value: float
    residual: float
    argmax: np.ndarray
    flags: list = field(default_factory=list)


def _time_integral(spatial, t: float, n_panels: int, n_nodes: int) -> tuple[float, float, bool]:
    """
    ∫_0^t spatial(s) ds по панелям u = √s; хвост у нуля оценивается
    геометрически по двум последним панелям.
    """
    s, w, _ = sqrt_time_panels(t, n_panels, n_nodes)
    vals = np.array([spatial(si) for si in s])
    per_panel = (w * vals).reshape(n_panels, n_nodes).sum(axis=1)
    total = float(per_panel.sum())
    last, prev = per_panel[-1], per_panel[-2]
    if last <= 0.0:
        return total, 0.0, False
    ratio = last / prev if prev > 0.0 else np.inf
    if ratio >= 0.95:
        return total, float('inf'), True
    tail = float(last * ratio / (1.0 - ratio))
    return total + tail, tail, False


def _kato_at(x, mu_abs, t, alpha, n_panels, n_nodes):
    d = mu_abs.d

    def spatial(s):
        return s ** (-0.5 * (d + 1)) * mu_abs.integrate_gaussian(x, s, alpha)
    return _time_integral(spatial, t, n_panels, n_nodes)


def kato_grid(mu_abs: SignedMeasure, t: float, extra=None) -> np.ndarray:
    """Решётка для sup по x: 3 точки на ось в боксе носителя, расширенном на 3√t."""
    box = mu_abs.support_box()
    lo, hi = box if box is not None else (-np.ones(mu_abs.d), np.ones(mu_abs.d))
    margin = 3.0 * np.sqrt(t)
    axes = [np.linspace(a - margin, b + margin, 3) for a, b in zip(lo, hi)]
    grid = np.array(np.meshgrid(*axes, indexing='ij')).reshape(mu_abs.d, -1).T
    parts = [grid, mu_abs.profile_grid()]
    if extra is not None:
        parts.append(np.atleast_2d(np.asarray(extra, dtype=float)))
    return np.unique(np.vstack(parts), axis=0)


def kato_norm_report(mu_abs: SignedMeasure, t: float, alpha: float, grid=None,
                     n_panels: int = 24, n_nodes: int = 6, workers: int | None = None) -> KatoNorm:
    if t <= 0.0 or alpha <= 0.0:
        raise DomainError('нужны t > 0 и α > 0')
    d = mu_abs.d
    if mu_abs.is_zero:
        return KatoNorm(0.0, 0.0, np.zeros(d))
    pts = kato_grid(mu_abs, t) if grid is None else np.atleast_2d(grid)
    results = parallel_map(partial(_kato_wrapper, mu_abs=mu_abs, t=t, alpha=alpha,
                                   n_panels=n_panels, n_nodes=n_nodes), list(pts), workers)
    values = np.array([r[0] for r in results])
    best = int(np.argmax(values))
    flags = []
    if any(r[2] for r in results):
        flags.append(FLAG_NOT_KATO)
        logger.warning('N_t^α: внутренний интеграл расходится у нуля; мера не в K_{d,1} на этом разрешении')
        return KatoNorm(float('inf'), float('inf'), pts[best], flags)
    return KatoNorm(float(values[best]), float(max(r[1] for r in results)), pts[best], flags)


def _kato_wrapper(x, mu_abs, t, alpha, n_panels, n_nodes):
    return _kato_at(x, mu_abs, t, alpha, n_panels, n_nodes)


def kato_norm_N(mu_abs: SignedMeasure, t: float, alpha: float, grid=None, **kwargs) -> float:
    """
    N_t^α(μ) = sup_x ∫_0^t ∫ s^{−(d+1)/2} exp(−α|x−y|²/s) |μ|(dy) ds,
    sup берётся по конечной решётке (kato_grid).
    """
    return kato_norm_report(mu_abs, t, alpha, grid, **kwargs).value


# ---------- ЯДРА ДЛЯ Λ_t ----------

class GaussianKernel:
    """Точное гауссово p (процесс без сноса)."""

    def __init__(self, d: int):
        self.d = d

    def gaussian_form(self, s: float) -> tuple[float, float]:
        # p = (2πs)^{−d/2} exp(−|x−y|²/2s)
        return (2.0 * np.pi * s) ** (-0.5 * self.d), 0.5

    def density(self, s, x, y) -> np.ndarray:
        return np.asarray(gaussian_p(s, x, y, self.d))


class EnvelopeKernel:
    """Гауссова мажоранта C₄e^{C₅s}s^{−d/2}exp(−C₆|x−y|²/s) с подгоночными константами."""

    def __init__(self, d: int, c4: float = 2.0, c5: float = 1.0, c6: float = 0.25):
        if min(c4, c6) <= 0.0:
            raise DomainError('C₄ и C₆ должны быть > 0')
        self.d, self.c4, self.c5, self.c6 = d, c4, c5, c6

    def gaussian_form(self, s: float) -> tuple[float, float]:
        return self.c4 * np.exp(self.c5 * s) * s ** (-0.5 * self.d), self.c6

    def density(self, s, x, y) -> np.ndarray:
        pref, a = self.gaussian_form(s)
        return pref * np.exp(-a * np.sum((np.atleast_2d(y) - x) ** 2, axis=1) / s)


def _lambda_at(x, mu_abs, t, kernel, n_panels, n_nodes, spatial_nodes):
    d = mu_abs.d
    form = getattr(kernel, 'gaussian_form', None)

    def spatial(s):
        if form is not None:
            pref, a = form(s)
            inner = pref * mu_abs.integrate_gaussian(x, s, a)
        else:
            half = GAUSS_WINDOW * np.sqrt(s)
            inner = mu_abs.integrate(lambda y: kernel.density(s, x, y), x - half, x + half, spatial_nodes)
        return inner / np.sqrt(s)
    return _time_integral(spatial, t, n_panels, n_nodes)


def lambda_norm(mu_abs: SignedMeasure, t: float, kernel, grid=None, n_panels: int = 24,
                n_nodes: int = 6, spatial_nodes: int = 8, workers: int | None = None) -> float:
    """
    Λ_t(μ) = sup_x ∫_0^t ∫ q(s,x,y) s^{−1/2} |μ|(dy) ds для ядра q
    (GaussianKernel, EnvelopeKernel или параметрикс).
    """
    if t <= 0.0:
        raise DomainError('t должно быть > 0')
    if mu_abs.is_zero:
        return 0.0
    pts = kato_grid(mu_abs, t) if grid is None else np.atleast_2d(grid)
    try:
        results = parallel_map(partial(_lambda_wrapper, mu_abs=mu_abs, t=t, kernel=kernel, n_panels=n_panels,
                                       n_nodes=n_nodes, spatial_nodes=spatial_nodes), list(pts), workers)
    except Exception as exc:
        exc.add_note(f'Λ_t: ошибка при вычислении ядра {type(kernel).__name__} (t={t})')
        raise
    if any(r[2] for r in results):
        logger.warning('Λ_t: интеграл по времени не сходится у нуля')
        return float('inf')
    return float(max(r[0] for r in results))


def _lambda_wrapper(x, mu_abs, t, kernel, n_panels, n_nodes, spatial_nodes):
    return _lambda_at(x, mu_abs, t, kernel, n_panels, n_nodes, spatial_nodes)


# ---------- ПРОФИЛЬ K_{d,1} ----------

def kato_membership_profile(mu_abs: SignedMeasure, radii, threshold: float = 1e-2, grid=None) -> KatoProfile:
    """Профиль r ↦ sup_x ∫_{|x−y|≤r} |μ|(dy)/|x−y|^{d−1} по решётке точек."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0.0) or np.any(np.diff(radii) >= 0.0):
        raise DomainError('радиусы должны быть положительны и строго убывать')
    pts = mu_abs.profile_grid() if grid is None else np.atleast_2d(grid)
    flags = []
    if mu_abs.d < 3:
        flags.append(FLAG_OUTSIDE_THEORY)
    if getattr(mu_abs, 'exact_total_variation', True) is False:
        flags.append(FLAG_ENVELOPE_TV)
    values = np.array([max(mu_abs.kato_ball_integral(x, r) for x in pts) for r in radii])
    if isinstance(mu_abs, Hyperplane) or (
            isinstance(mu_abs, WeightedSum) and any(isinstance(m, Hyperplane) for _, m in mu_abs.terms)):
        flags.append(FLAG_NOT_KATO)
        logger.warning('поверхностная мера гиперплоскости (γ = 0) не удовлетворяет критерию K_{d,1}')
    if not np.all(np.isfinite(values)):
        if FLAG_NOT_KATO not in flags:
            flags.append(FLAG_NOT_KATO)
        logger.warning('профиль Като бесконечен на части решётки')
    return KatoProfile(radii=radii, values=values, threshold=threshold, flags=flags)


# ---------- СБОРКА ИЗ JSON ----------

def build_measure(spec: dict, d: int) -> SignedMeasure:
    kind = spec['kind']
    if kind == 'density':
        family = spec['family']
        if family == 'constant':
            return Density.constant_density(spec.get('value', 1.0), d)
        if family == 'zero':
            return Density.constant_density(0.0, d)
        if family == 'gaussian_bump':
            return GaussianBump(spec['center'], spec['sigma'], spec.get('height', 1.0))
        if family == 'linear':
            return Density.linear(spec['coef'], spec.get('offset', 0.0), spec.get('half_width', 10.0))
        if family == 'power_singular':
            return Density.power_singular(spec['center'], spec['beta'], spec.get('radius', 1.0), spec.get('height', 1.0))
        raise DomainError(f'неизвестное семейство плотностей {family!r}')
    if kind == 'cantor_product':
        return CantorProduct(spec.get('axis', 0), spec.get('weight', 1.0), spec.get('lo', 0.0), spec.get('hi', 1.0), d)
    if kind == 'hyperplane':
        return Hyperplane(spec.get('axis', 0), spec.get('position', 0.5), spec.get('weight', 1.0),
                          spec.get('lo', 0.0), spec.get('hi', 1.0), d)
    if kind == 'sum':
        return WeightedSum([(t['coefficient'], build_measure(t['measure'], d)) for t in spec['terms']])
    raise DomainError(f'неизвестный вид меры {kind!r}')


def build_drift(spec: dict) -> DriftMeasure:
    d = int(spec['dimension'])
    kind = spec.get('kind', 'zero')
    if kind == 'zero':
        return DriftMeasure.zero(d)
    if kind == 'constant':
        return DriftMeasure.constant(spec['vector'])
    if kind == 'ou':
        return DriftMeasure.ornstein_uhlenbeck(spec['gamma'], d, spec.get('half_width', 10.0))
    if kind == 'bump':
        return DriftMeasure.bump(spec['center'], spec['sigma'], spec['height'], spec['direction'])
    if kind == 'components':
        return DriftMeasure([build_measure(m, d) for m in spec['components']], name='components')
    raise DomainError(f'неизвестный вид сноса {kind!r}')
