# simulate.py
"""
Монте-Карло для X = x + W + A: схема Эйлера–Маруямы на сглаженном сносе
b^{(n)} и оценки функционалов (моменты, преобразование Лапласа, хвосты
sup|A|, вероятности шаров, ядерная оценка плотности).

Траектории считаются блоками фиксированного размера; блок i берёт поток
default_rng(SeedSequence([seed, i])), результаты склеиваются в порядке
блоков: ответ не зависит от числа воркеров.
"""
from dataclasses import dataclass, field, replace
from functools import partial
import logging

import numpy as np
import pandas as pd
from scipy import optimize

from errors import BudgetExhausted, DomainError, NumericalRefusal
from extensions import parallel_map
from kernels import alpha_coeff, gaussian_ball_probability, gaussian_p, log_factorial, unit_ball_volume
from measures import DriftMeasure, EnvelopeKernel, GaussianKernel, SignedMeasure, kato_grid, kato_norm_N, lambda_norm
from models import (
    FLAG_DETERMINISTIC_ZERO, FLAG_EXCLUDED_PATHS, FLAG_FEW_SAMPLES, FLAG_OUTSIDE_THEORY,
    EstimatorResult, PathEnsemble,
)
from parametrix import SeriesConfig, closed_form_density, heat_kernel
from quadrature import gauss_legendre, tensor_hermite

logger = logging.getLogger(__name__)

MAX_POWER = 6
EXP_GUARD = 700.0
RECORD_BUDGET = 50_000_000       # чисел в памяти на ансамбль
DEFAULT_ENVELOPE = (2.0, 1.0, 0.25)


# ---------- КОНФИГУРАЦИЯ ----------

@dataclass
class SdeConfig:
    drift: DriftMeasure
    mollify_level: int | None = None     # None: плотность напрямую
    step: float = 1e-3
    horizon: float = 1.0
    paths: int = 10000
    seed: int = 0
    block_size: int = 4096
    envelope: tuple = DEFAULT_ENVELOPE   # (C₄, C₅, C₆) для мажоранты q

    def __post_init__(self):
        if self.step <= 0.0 or self.horizon <= 0.0:
            raise DomainError('шаг и горизонт должны быть > 0')
        if self.paths < 1 or self.block_size < 1:
            raise DomainError('число траекторий должно быть ≥ 1')
        if self.mollify_level is None and not self.drift.has_density:
            raise DomainError('мера без плотности: задайте mollify_level')
        if self.mollify_level is not None:
            if self.mollify_level < 0:
                raise DomainError('уровень сглаживания должен быть ≥ 0')
            if self.step > 2.0 ** (-2 * self.mollify_level) * (1.0 + 1e-12):
                raise DomainError(f'шаг h={self.step} > 2^(-2n)={2.0 ** (-2 * self.mollify_level):g}')

    @property
    def d(self) -> int:
        return self.drift.d

    def n_steps(self, horizon: float | None = None) -> int:
        horizon = self.horizon if horizon is None else horizon
        n = int(round(horizon / self.step))
        if n < 1 or abs(n * self.step - horizon) > 1e-9 * max(1.0, horizon):
            raise DomainError(f'горизонт {horizon} не кратен шагу {self.step}')
        return n

    def with_horizon(self, horizon: float) -> 'SdeConfig':
        step = self.step
        # горизонт короче шага или не кратен: шаг уменьшается до делителя
        n = max(1, int(np.ceil(horizon / step - 1e-9)))
        return replace(self, horizon=horizon, step=horizon / n)

    def drift_at(self, points) -> np.ndarray:
        return self.drift.field(points, self.mollify_level)


# ---------- НАБЛЮДАТЕЛИ ----------

class Observer:
    """Собирает статистику по блоку траекторий по ходу схемы."""

    def __init__(self, n: int, d: int, h: float):
        self.n, self.d, self.h = n, d, h

    def start(self, X):
        pass

    def pre_step(self, step, t, X, b):
        pass

    def post_step(self, step, t, X, W, A):
        pass

    def result(self) -> dict:
        return {}


class RecordObserver(Observer):
    def __init__(self, n, d, h, record_steps):
        super().__init__(n, d, h)
        self.record_steps = np.asarray(record_steps, dtype=int)
        self._slot = {s: i for i, s in enumerate(self.record_steps)}
        m = self.record_steps.size
        self.X = np.empty((n, m, d))
        self.W = np.zeros((n, m, d))
        self.A = np.zeros((n, m, d))

    def start(self, X):
        if 0 in self._slot:
            self.X[:, self._slot[0]] = X

    def post_step(self, step, t, X, W, A):
        i = self._slot.get(step)
        if i is not None:
            self.X[:, i], self.W[:, i], self.A[:, i] = X, W, A

    def result(self):
        return {'X': self.X, 'W': self.W, 'A': self.A}


class FunctionalObserver(Observer):
    """∫_0^t f(X_s) ds левыми суммами Римана (согласовано со схемой Эйлера)."""

    def __init__(self, n, d, h, functional: SignedMeasure, level, until_step):
        super().__init__(n, d, h)
        self.functional, self.level, self.until = functional, level, until_step
        self.integral = np.zeros(n)

    def pre_step(self, step, t, X, b):
        if step <= self.until:
            m = self.functional
            vals = m.density_values(X) if self.level is None else m.mollify(self.level, X)
            self.integral += vals * self.h

    def result(self):
        return {'integral': self.integral}


class SupAObserver(Observer):
    def __init__(self, n, d, h):
        super().__init__(n, d, h)
        self.sup = np.zeros(n)

    def post_step(self, step, t, X, W, A):
        np.maximum(self.sup, np.linalg.norm(A, axis=1), out=self.sup)

    def result(self):
        return {'sup_A': self.sup}


class TerminalObserver(Observer):
    def __init__(self, n, d, h):
        super().__init__(n, d, h)
        self.X = None

    def post_step(self, step, t, X, W, A):
        self.X = X

    def result(self):
        return {'X': self.X}


class SupDeviationObserver(Observer):
    """sup_k |X_{t_k} − f(t_k/ε)| по узлам схемы (дискретный мониторинг трубки)."""

    def __init__(self, n, d, h, path, eps):
        super().__init__(n, d, h)
        self.path, self.eps = path, eps
        self.sup = np.zeros(n)

    def start(self, X):
        self.sup = np.linalg.norm(X - self.path.evaluate(0.0)[0], axis=1)

    def post_step(self, step, t, X, W, A):
        target = self.path.evaluate(min(t / self.eps, 1.0))[0]
        np.maximum(self.sup, np.linalg.norm(X - target, axis=1), out=self.sup)

    def result(self):
        return {'sup_dev': self.sup}


# ---------- ДВИЖОК ----------

def _run_block(block, cfg: SdeConfig, x, n_steps, observer_cls, observer_kwargs):
    n = min(cfg.block_size, cfg.paths - block * cfg.block_size)
    d, h = cfg.d, cfg.step
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, block]))
    W = np.zeros((n, d))
    A = np.zeros((n, d))
    X = np.repeat(x[None, :], n, axis=0)
    bad = np.zeros(n, dtype=bool)
    obs = observer_cls(n, d, h, **observer_kwargs)
    obs.start(X)
    sqrt_h = np.sqrt(h)
    for step in range(1, n_steps + 1):
        b = cfg.drift_at(X)
        broken = ~np.all(np.isfinite(b), axis=1)
        if broken.any():
            bad |= broken
            b[broken] = 0.0
        obs.pre_step(step, (step - 1) * h, X, b)
        A = A + b * h
        W = W + sqrt_h * rng.standard_normal((n, d))
        X = x + W + A
        obs.post_step(step, step * h, X, W, A)
    return obs.result(), bad


def run_paths(cfg: SdeConfig, x, observer_cls, workers: int | None = None, **observer_kwargs) -> tuple[dict, int]:
    """Прогон всех блоков; траектории с невычислимым сносом исключаются."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (cfg.d,):
        raise DomainError(f'стартовая точка должна иметь размерность {cfg.d}')
    n_steps = cfg.n_steps()
    n_blocks = -(-cfg.paths // cfg.block_size)
    parts = parallel_map(partial(_run_block, cfg=cfg, x=x, n_steps=n_steps, observer_cls=observer_cls,
                                 observer_kwargs=observer_kwargs), range(n_blocks), workers)
    bad = np.concatenate([p[1] for p in parts])
    keys = parts[0][0].keys()
    merged = {k: np.concatenate([p[0][k] for p in parts])[~bad] for k in keys}
    excluded = int(bad.sum())
    if excluded:
        logger.warning('исключено %d траекторий: снос не вычислим в достигнутых точках', excluded)
    return merged, excluded


def _flags(cfg: SdeConfig, excluded: int) -> list:
    flags = [FLAG_OUTSIDE_THEORY] if cfg.d < 3 else []
    if excluded:
        flags.append(FLAG_EXCLUDED_PATHS)
    return flags


# ---------- ТРАЕКТОРИИ ----------

def simulate_paths(cfg: SdeConfig, x, record_times=None, workers: int | None = None) -> PathEnsemble:
    """Ансамбль с раздельными W и A; record_times прореживает сохраняемую сетку."""
    n_steps = cfg.n_steps()
    if record_times is None:
        steps = np.arange(n_steps + 1)
    else:
        steps = np.unique(np.clip(np.rint(np.asarray(record_times, dtype=float) / cfg.step).astype(int), 0, n_steps))
    if 3 * cfg.paths * steps.size * cfg.d > RECORD_BUDGET:
        raise BudgetExhausted(f'ансамбль {cfg.paths}×{steps.size} не помещается в память; задайте record_times')
    res, excluded = run_paths(cfg, x, RecordObserver, workers, record_steps=steps)
    return PathEnsemble(times=steps * cfg.step, x0=np.asarray(x, dtype=float), brownian=res['W'],
                        drift_part=res['A'], states=res['X'], excluded=excluded, seed=cfg.seed)


def coupled_levels(cfg: SdeConfig, x, levels, quantiles=(0.5, 0.9, 0.99)) -> pd.DataFrame:
    """
    Траектории на уровнях n и n+1 с общими приращениями W: медиана
    max_t|A^{(n+1)} − A^{(n)}| и квантили ∫|b^{(n)}(X_s)|ds.
    """
    levels = sorted(int(v) for v in levels)
    runs = {}
    for n in levels:
        sub = replace(cfg, mollify_level=n)
        ens = simulate_paths(sub, x)
        runs[n] = ens
    rows = []
    for n in levels:
        ens = runs[n]
        speed = np.linalg.norm(np.diff(ens.drift_part, axis=1), axis=2).sum(axis=1)
        row = {'level': n, **{f'int_abs_b_q{q}': float(np.quantile(speed, q)) for q in quantiles}}
        if n + 1 in runs:
            nxt = runs[n + 1]
            keep = min(ens.n_paths, nxt.n_paths)
            gap = np.linalg.norm(nxt.drift_part[:keep] - ens.drift_part[:keep], axis=2).max(axis=1)
            row['median_max_gap'] = float(np.median(gap))
        rows.append(row)
    return pd.DataFrame(rows)


# ---------- МОМЕНТЫ И ЛАПЛАС ----------

def _functional(cfg: SdeConfig, functional: SignedMeasure | None) -> SignedMeasure:
    return cfg.drift.abs_sum() if functional is None else functional


def _lambda_for(cfg: SdeConfig, f: SignedMeasure, x, t: float) -> float:
    """Λ_t(f): точное гауссово ядро при нулевой динамике, иначе мажоранта с подгоночными константами."""
    kernel = GaussianKernel(cfg.d) if cfg.drift.is_zero else EnvelopeKernel(cfg.d, *cfg.envelope)
    return lambda_norm(f, t, kernel, grid=kato_grid(f, t, extra=[x]))


def _integrals(cfg, x, t, f, workers):
    sub = cfg.with_horizon(t)
    level = None if f.has_density else cfg.mollify_level
    res, excluded = run_paths(sub, x, FunctionalObserver, workers, functional=f, level=level,
                              until_step=sub.n_steps())
    return res['integral'], excluded


def estimate_moments(cfg: SdeConfig, x, powers, t: float, functional: SignedMeasure | None = None,
                     workers: int | None = None) -> dict[int, EstimatorResult]:
    """
    E_x[(∫_0^t f(X_s)ds)^n] для всех n из powers по одному прогону траекторий
    и граница n!·α_n·(√t·Λ_t(f))^n для каждой степени.
    """
    powers = [int(n) for n in powers]
    bad = [n for n in powers if n < 0 or n > MAX_POWER]
    if bad:
        raise DomainError(f'степени {bad} вне 0..{MAX_POWER}')
    out = {}
    if any(n > 0 for n in powers):
        f = _functional(cfg, functional)
        integral, excluded = _integrals(cfg, x, t, f, workers)
        lam = _lambda_for(cfg, f, x, t)
    for n in powers:
        if n == 0:
            out[n] = EstimatorResult(mean=1.0, stderr=0.0, n_samples=cfg.paths, details={'bound': 1.0})
            continue
        bound = float(np.exp(log_factorial(n)) * alpha_coeff(n) * (np.sqrt(t) * lam) ** n)
        res = EstimatorResult.from_samples(integral ** n, bound=bound, lambda_t=lam, t=t, n_power=n)
        res.flags.extend(_flags(cfg, excluded))
        out[n] = res
    return out


def estimate_moment(cfg: SdeConfig, x, n_power: int, t: float, functional: SignedMeasure | None = None,
                    workers: int | None = None) -> EstimatorResult:
    return estimate_moments(cfg, x, [n_power], t, functional, workers)[int(n_power)]


def estimate_laplace(cfg: SdeConfig, x, lam: float, t: float, functional: SignedMeasure | None = None,
                     workers: int | None = None) -> EstimatorResult:
    """E_x[exp(λ∫_0^t f(X_s)ds)] и обе формы оценки: (1+λ√tΛ)e^{λ²tΛ²} и 2e^{2λ²tΛ²}."""
    if lam <= 0.0:
        raise DomainError('λ должно быть > 0')
    f = _functional(cfg, functional)
    sup = f.mollified_sup(None if f.has_density else cfg.mollify_level)
    if sup is not None and lam * sup * t > EXP_GUARD:
        raise NumericalRefusal(f'λ·sup f·t = {lam * sup * t:.3g} > {EXP_GUARD}: переполнение exp', value=lam * sup * t)
    integral, excluded = _integrals(cfg, x, t, f, workers)
    if np.max(lam * integral, initial=0.0) > EXP_GUARD:
        raise NumericalRefusal('λ∫f превысил порог переполнения exp', value=float(np.max(lam * integral)))
    big_lam = _lambda_for(cfg, f, x, t)
    z = lam * np.sqrt(t) * big_lam
    res = EstimatorResult.from_samples(np.exp(lam * integral), bound_series=float((1.0 + z) * np.exp(z * z)),
                                       bound=float(2.0 * np.exp(2.0 * z * z)), lambda_t=big_lam, lam=lam, t=t)
    res.flags.extend(_flags(cfg, excluded))
    return res


def second_moment_oracle(f: SignedMeasure, x, t: float, time_nodes: int = 16, hermite_nodes: int = 5) -> float:
    """
    E_x[(∫_0^t f(x+W_s)ds)²] = 2∫_{s1<s2}∫∫ p(s1,x,y1)f(y1)p(s2−s1,y1,y2)f(y2) вложенной квадратурой.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    xi, wxi = tensor_hermite(hermite_nodes, d)
    s1, w1 = gauss_legendre(time_nodes, 0.0, t)
    total = 0.0
    for a, wa in zip(s1, w1):
        y1 = x + np.sqrt(a) * xi
        f1 = f.density_values(y1)
        s2, w2 = gauss_legendre(time_nodes, a, t)
        for b, wb in zip(s2, w2):
            y2 = y1[:, None, :] + np.sqrt(b - a) * xi[None, :, :]
            f2 = f.density_values(y2.reshape(-1, d)).reshape(y1.shape[0], -1)
            total += wa * wb * float(wxi @ (f1[:, None] * f2) @ wxi)
    return 2.0 * total


# ---------- ХВОСТЫ sup|A| ----------

def sup_A_chernoff_bound(drift: DriftMeasure, delta: float, eps: float, envelope=DEFAULT_ENVELOPE) -> float:
    """2exp(−δ²/(8εC₄²e^{2C₅}N_ε^{C₆}(Σ|μ_i|)²)) с подгоночными константами мажоранты."""
    c4, c5, c6 = envelope
    if drift.is_zero:
        return 0.0
    n = kato_norm_N(drift.abs_sum(), eps, c6)
    return float(min(1.0, 2.0 * np.exp(-delta ** 2 / (8.0 * eps * c4 ** 2 * np.exp(2.0 * c5) * n ** 2))))


def sup_A_laplace_bound(drift: DriftMeasure, lam: float, t: float, envelope=DEFAULT_ENVELOPE) -> float:
    """E exp(λ sup|A|) ≤ 2exp(2λ²tC₄²e^{2C₅}N_t^{C₆}(Σ|μ_i|)²)."""
    c4, c5, c6 = envelope
    n = 0.0 if drift.is_zero else kato_norm_N(drift.abs_sum(), t, c6)
    return float(2.0 * np.exp(2.0 * lam ** 2 * t * c4 ** 2 * np.exp(2.0 * c5) * n ** 2))


def sup_A_tail(cfg: SdeConfig, x, delta: float, eps: float, workers: int | None = None) -> EstimatorResult:
    """P_x(sup_{s≤ε}|A_s| > δ); при δ ≥ ε·sup|b^{(n)}|: точный ноль."""
    if delta <= 0.0 or eps <= 0.0:
        raise DomainError('нужны δ > 0 и ε > 0')
    sup_b = cfg.drift.sup_bound(cfg.mollify_level)
    if sup_b is not None and delta >= eps * sup_b:
        return EstimatorResult(mean=0.0, stderr=0.0, n_samples=cfg.paths, upper95=0.0,
                               flags=[FLAG_DETERMINISTIC_ZERO], details={'eps': eps, 'delta': delta})
    sub = cfg.with_horizon(eps)
    res, excluded = run_paths(sub, x, SupAObserver, workers)
    hits = int(np.sum(res['sup_A'] > delta))
    out = EstimatorResult.from_proportion(hits, res['sup_A'].size, eps=eps, delta=delta)
    out.flags.extend(_flags(cfg, excluded))
    return out


# ---------- ВЕРОЯТНОСТЬ ШАРА ----------

def ball_lower_bound(d: int, distance: float, eps_ball: float, r: float, tail=None) -> tuple[float, float]:
    """
    max по δ ∈ (0, ε) от (2πr)^{−d/2}ω_d(ε−δ)^d exp(−(|x−y|+ε−δ)²/2r) − tail(δ).
    Возвращает (значение, δ*).
    """
    log_c = -0.5 * d * np.log(2.0 * np.pi * r) + np.log(unit_ball_volume(d))

    def value(delta):
        gauss = np.exp(log_c + d * np.log(eps_ball - delta) - (distance + eps_ball - delta) ** 2 / (2.0 * r))
        return gauss - (tail(delta) if tail is not None else 0.0)
    res = optimize.minimize_scalar(lambda dl: -value(dl), bounds=(1e-12 * eps_ball, eps_ball * (1.0 - 1e-9)),
                                   method='bounded', options={'xatol': 1e-10 * eps_ball})
    return float(value(res.x)), float(res.x)


def ball_probability(cfg: SdeConfig, x, y, eps_ball: float, r: float, workers: int | None = None) -> EstimatorResult:
    """P_x(X_r ∈ B(y, ε)) с нижней оценкой, оптимизированной по δ, и гауссовым оракулом при b = 0."""
    if eps_ball <= 0.0 or r <= 0.0:
        raise DomainError('нужны ε > 0 и r > 0')
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sub = cfg.with_horizon(r)
    res, excluded = run_paths(sub, x, TerminalObserver, workers)
    hits = int(np.sum(np.linalg.norm(res['X'] - y, axis=1) < eps_ball))
    dist = float(np.linalg.norm(x - y))
    drift = cfg.drift
    tail = None if drift.is_zero else (lambda dl: sup_A_chernoff_bound(drift, dl, r, cfg.envelope))
    lower, best_delta = ball_lower_bound(cfg.d, dist, eps_ball, r, tail)
    out = EstimatorResult.from_proportion(hits, res['X'].shape[0], lower_bound=lower, best_delta=best_delta,
                                          r=r, eps_ball=eps_ball)
    if drift.is_zero:
        out.details['exact'] = gaussian_ball_probability(cfg.d, dist, eps_ball, r)
    out.flags.extend(_flags(cfg, excluded))
    return out


# ---------- ЯДЕРНАЯ ОЦЕНКА ПЛОТНОСТИ ----------

def _kde_at(points: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    d = points.shape[1]
    return gaussian_p(h * h, points, y[None, :], d)


def kde_density(ensemble: PathEnsemble, t: float, y, bandwidth: float | None = None,
                min_effective: int = 30) -> EstimatorResult:
    """
    Гауссово ядро по X_t; по умолчанию ширина по Сильверману σ̂·n^{−1/(d+4)}.
    Чувствительность к ширине (2h и h/2): в details.
    """
    pts = ensemble.at(t)
    y = np.asarray(y, dtype=float)
    n, d = pts.shape
    if bandwidth is None:
        bandwidth = float(np.mean(pts.std(axis=0, ddof=1)) * n ** (-1.0 / (d + 4)))
    if bandwidth <= 0.0:
        raise DomainError('ширина ядра должна быть > 0')
    vals = np.atleast_1d(_kde_at(pts, y, bandwidth))
    res = EstimatorResult.from_samples(vals, bandwidth=bandwidth, t=t)
    res.details['at_2h'] = float(np.mean(_kde_at(pts, y, 2.0 * bandwidth)))
    res.details['at_h_half'] = float(np.mean(_kde_at(pts, y, 0.5 * bandwidth)))
    effective = int(np.sum(np.linalg.norm(pts - y, axis=1) < 2.0 * bandwidth))
    res.details['effective_samples'] = effective
    if effective < min_effective:
        res.flags.append(FLAG_FEW_SAMPLES)
        logger.warning('KDE: всего %d точек в 2h-окрестности y', effective)
    return res


# ---------- НИЖНЯЯ ОЦЕНКА ЧЕРЕЗ ЧЕПМЕНА–КОЛМОГОРОВА ----------

@dataclass
class ChapmanReport:
    t: float
    eta: float
    eps_ball: float
    inf_q: float
    ball: EstimatorResult
    product: float
    product_err: float
    q: float
    q_err: float
    holds: bool
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != 'ball'}
        out['ball'] = self.ball.to_dict()
        return out


def chapman_lower_bound(t: float, eta: float, eps_ball: float, x, y, cfg: SdeConfig, series_cfg=None,
                        tol: float = 1e-2, workers: int | None = None) -> ChapmanReport:
    """
    inf_{z∈B(y,ε)} q(ηt,z,y)·P_x(X_{(1−η)t} ∈ B(y,ε)) ≤ q(t,x,y).
    inf берётся по центру и 2d точкам y ± ε e_i; q(t,x,y): замкнутая формула, если есть, иначе KDE.
    """
    if not 0.0 < eta < 1.0:
        raise DomainError('η должно лежать в (0,1)')
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if series_cfg is None:
        series_cfg = SeriesConfig(drift=cfg.drift)
    d = cfg.d
    probes = [y] + [y + s * eps_ball * (1.0 - 1e-9) * e for e in np.eye(d) for s in (1.0, -1.0)]
    values, errors = [], []
    for z in probes:
        exact = closed_form_density(cfg.drift, eta * t, z, y)
        if exact is not None:
            values.append(exact)
            errors.append(0.0)
        else:
            est = heat_kernel(eta * t, z, y, series_cfg, tol)
            values.append(est.value)
            errors.append(est.truncation_bound + est.quad_error)
    i = int(np.argmin(values))
    inf_q, inf_err = float(values[i]), float(errors[i])
    ball = ball_probability(cfg, x, y, eps_ball, (1.0 - eta) * t, workers)
    product = inf_q * ball.mean
    product_err = inf_q * 1.96 * ball.stderr + inf_err * ball.mean
    exact_q = closed_form_density(cfg.drift, t, x, y)
    if exact_q is not None:
        q, q_err = exact_q, 0.0
    else:
        ens = simulate_paths(cfg.with_horizon(t), x, record_times=[t], workers=workers)
        kde = kde_density(ens, ens.times[-1], y)
        q, q_err = kde.mean, 1.96 * kde.stderr
    holds = product - product_err <= q + q_err
    return ChapmanReport(t=t, eta=eta, eps_ball=eps_ball, inf_q=inf_q, ball=ball, product=product,
                         product_err=product_err, q=q, q_err=q_err, holds=bool(holds),
                         flags=list(ball.flags))
