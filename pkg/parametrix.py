# parametrix.py
"""
Переходная плотность q(t,x,y) оператора ½Δ + b·∇ рядом параметрикса
q = Σ_k I_k, I_0 = p, I_{k+1}(t,x,y) = ∫_0^t∫ I_k(t−s,x,z) b(z)·∇_z p(s,z,y) dz ds.

I_k раскрывается в k-кратный упорядоченный по времени интеграл по мосту:

    I_k = p(t,x,y) · ∫_{0<T_1<…<T_k<t} E[Π_i b(Z_i)·(Z_{i+1}−Z_i)/(T_{i+1}−T_i)] dT,

где Z: броуновский мост x → y на [0, t], Z_{k+1} = y. Члены хранятся
относительно p, поэтому log q остаётся конечным, когда p уходит в ноль.

Два режима квадратуры:
  * deterministic: вложенный Гаусс–Лежандр по временам (разрез пополам и
    квадратичные замены на краях) и вложенный Гаусс–Эрмит по переходам моста;
    ошибка: разность с правилом на один временной узел меньше;
  * importance: промежутки ~ Dirichlet(1, ½, …, ½), точки моста
    последовательно; независимые страты со своими потоками (seed, k, страта).
"""
from dataclasses import dataclass, field
from functools import lru_cache
import json
import logging

import numpy as np
import pandas as pd
from scipy import special

import extensions
from errors import BudgetExhausted, DomainError, NumericalRefusal
from extensions import parallel_map
from kernels import gaussian_p, log_g_kernel, log_gaussian_p, m_delta_unchecked
from measures import DriftMeasure, GaussianBump, SignedMeasure, kato_norm_N
from models import (
    FLAG_CALIBRATED, FLAG_EMPIRICAL_TAIL, FLAG_NEGATIVE, FLAG_OUTSIDE_THEORY,
    FLAG_UNCONVERGED, HeatKernelEstimate,
)
from quadrature import split_time_rule, tensor_hermite

logger = logging.getLogger(__name__)

MODES = ('deterministic', 'importance')
T_MAX_POLICIES = ('enforce', 'warn', 'off')
CHUNK = 40000           # частиц на один шаг развёртки дерева узлов
LOG_UNDERFLOW = -700.0


# ---------- КОНФИГУРАЦИЯ РЯДА ----------

@dataclass
class SeriesConfig:
    drift: DriftMeasure
    delta: float = 0.3
    max_terms: int = 6                  # старший номер члена k
    mode: str = 'deterministic'
    time_nodes: int = 3                 # узлов Гаусса–Лежандра на половину отрезка
    hermite_nodes: int = 3              # узлов Гаусса–Эрмита на ось
    samples: int = 20000                # для importance: всего на член
    strata: int = 8
    seed: int = 0
    t_max_policy: str = 'enforce'
    c_delta: float | None = None        # None: откалибровать
    kato_alpha: float | None = None     # None: (1 − δ/2)/4
    mollify_level: int | str | None = 'auto'
    mollify_start: int = 2
    mollify_max: int = 8

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f'δ={self.delta} вне (0,1)')
        if self.max_terms < 1:
            raise DomainError('max_terms должно быть ≥ 1')
        if self.mode not in MODES:
            raise DomainError(f'режим квадратуры {self.mode!r} не из {MODES}')
        if self.t_max_policy not in T_MAX_POLICIES:
            raise DomainError(f'политика T_δ {self.t_max_policy!r} не из {T_MAX_POLICIES}')
        if self.time_nodes < 2 or self.hermite_nodes < 1:
            raise DomainError('нужно time_nodes ≥ 2 и hermite_nodes ≥ 1')
        if self.samples < 1 or self.strata < 1:
            raise DomainError('число выборок и страт должно быть положительным')

    @property
    def d(self) -> int:
        return self.drift.d

    @property
    def alpha(self) -> float:
        return self.kato_alpha if self.kato_alpha is not None else 0.25 * (1.0 - 0.5 * self.delta)

    def level_for(self, level=None):
        """Уровень сглаживания для вычисления поля: None у плотностей."""
        if level is not None:
            return level
        if isinstance(self.mollify_level, int):
            return self.mollify_level
        return None if self.drift.has_density else self.mollify_start


@dataclass
class SeriesTerm:
    k: int
    value: float
    error: float
    relative: float         # I_k / p
    relative_error: float
    log_p: float


# ---------- ЗАМКНУТЫЕ ФОРМУЛЫ ----------

def constant_drift_density(t, x, y, c) -> float:
    """q для b ≡ c: сдвинутая гауссиана p(t, x + ct, y)."""
    x = np.asarray(x, dtype=float)
    return gaussian_p(t, x + np.asarray(c) * t, y, x.size)


def constant_drift_terms(k_max: int, t, x, y, c) -> np.ndarray:
    """
    Однородные по c части степени k ряда q/p = exp(c·(y−x) − |c|²t/2):
    He_k(u/√v)·v^{k/2}/k!, u = c·(y−x), v = |c|²t. Для b ≡ c это I_k/p.
    """
    c = np.asarray(c, dtype=float)
    u = float(c @ (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)))
    v = float(c @ c) * t
    k = np.arange(k_max + 1)
    if v == 0.0:
        return np.where(k == 0, 1.0, 0.0)
    return special.eval_hermitenorm(k, u / np.sqrt(v)) * v ** (0.5 * k) / special.factorial(k)


def ou_density(t, x, y, gamma: float) -> float:
    """q для b(x) = −γx: среднее x e^{−γt}, дисперсия (1 − e^{−2γt})/(2γ) по каждой оси."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    var = -np.expm1(-2.0 * gamma * t) / (2.0 * gamma)
    mean = x * np.exp(-gamma * t)
    return float((2.0 * np.pi * var) ** (-0.5 * x.size) * np.exp(-np.sum((y - mean) ** 2) / (2.0 * var)))


def closed_form_density(drift: DriftMeasure, t, x, y) -> float | None:
    if drift.is_zero:
        return gaussian_p(t, x, y, drift.d)
    if drift.name == 'constant':
        return constant_drift_density(t, x, y, drift.params['vector'])
    if drift.name == 'ou':
        return ou_density(t, x, y, drift.params['gamma'])
    return None


# ---------- ДЕТЕРМИНИРОВАННАЯ ЛЕСТНИЦА ----------

def _unit_split_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Правило split_time_rule на (0,1): доли θ и веса (умножаются на длину)."""
    theta, w = split_time_rule(1.0, q)
    return theta, w


def _bridge_tensor(k, t, x, y, field, time_nodes, hermite_nodes) -> float:
    """J_k = I_k/p по вложенным правилам; развёртка дерева идёт кусками по CHUNK частиц."""
    d = x.size
    theta, wth = _unit_split_rule(time_nodes)
    xi, wxi = tensor_hermite(hermite_nodes, d)
    nt, nh = theta.size, wxi.size

    def descend(level, T, Z, bz, W):
        if level == k:
            return float(np.sum(W * np.einsum('nd,nd->n', bz, y - Z) / (t - T)))
        total = 0.0
        step = max(1, CHUNK // (nt * nh))
        for s in range(0, T.size, step):
            Tc, Zc, Wc = T[s:s + step], Z[s:s + step], W[s:s + step]
            L = t - Tc
            dT = L[:, None] * theta[None, :]
            Tn = Tc[:, None] + dT
            sd = np.sqrt(L[:, None] * theta[None, :] * (1.0 - theta[None, :]))
            mean = Zc[:, None, :] + theta[None, :, None] * (y - Zc)[:, None, :]
            Zn = mean[:, :, None, :] + sd[:, :, None, None] * xi[None, None, :, :]
            Wn = Wc[:, None, None] * (L[:, None] * wth[None, :])[:, :, None] * wxi[None, None, :]
            if bz is not None:
                step_vec = Zn - Zc[:, None, None, :]
                Wn = Wn * np.einsum('bd,btnd->btn', bz[s:s + step], step_vec) / dT[:, :, None]
            Zf = Zn.reshape(-1, d)
            total += descend(level + 1, np.repeat(Tn.reshape(-1), nh), Zf, field(Zf), Wn.reshape(-1))
        return total

    return descend(0, np.zeros(1), x[None, :].copy(), None, np.ones(1))


# ---------- ВЫБОРКА ПО ЗНАЧИМОСТИ ----------

def _ladder_stratum(stratum, k, t, x, y, field, n, seed) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, k, stratum]))
    d = x.size
    gaps = np.maximum(rng.dirichlet([1.0] + [0.5] * k, size=n), 1e-300) * t
    times = np.cumsum(gaps, axis=1)                         # T_1 … T_k, T_{k+1} = t
    log_w = k * np.log(t) + 0.5 * k * np.log(np.pi) - special.gammaln(1.0 + 0.5 * k) \
        + 0.5 * np.sum(np.log(gaps[:, 1:] / t), axis=1)
    vals = np.exp(log_w)
    Z = np.repeat(x[None, :], n, axis=0)
    T_prev = np.zeros(n)
    bz = None
    for i in range(k):
        T_i = times[:, i]
        L = t - T_prev
        theta = gaps[:, i] / L
        var = gaps[:, i] * (t - T_i) / L
        Zn = Z + theta[:, None] * (y - Z) + np.sqrt(np.maximum(var, 0.0))[:, None] * rng.standard_normal((n, d))
        if bz is not None:
            vals = vals * np.einsum('nd,nd->n', bz, Zn - Z) / gaps[:, i]
        Z, T_prev = Zn, T_i
        bz = field(Z)
    return vals * np.einsum('nd,nd->n', bz, y - Z) / gaps[:, k]


def _bridge_importance(k, t, x, y, field, samples, strata, seed) -> tuple[float, float]:
    per = max(1, samples // strata)
    parts = parallel_map(lambda s: _ladder_stratum(s, k, t, x, y, field, per, seed), range(strata))
    vals = np.concatenate(parts)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))


# ---------- ЧЛЕНЫ РЯДА ----------

def _field(cfg: SeriesConfig, level):
    drift = cfg.drift
    return lambda pts: drift.field(pts, level)


def _term(k, t, x, y, cfg, level) -> SeriesTerm:
    d = cfg.d
    log_p = log_gaussian_p(t, x, y, d)
    p = float(np.exp(log_p))
    if k == 0:
        return SeriesTerm(0, p, 0.0, 1.0, 0.0, log_p)
    if cfg.drift.is_zero:
        return SeriesTerm(k, 0.0, 0.0, 0.0, 0.0, log_p)
    field = _field(cfg, level)
    if cfg.mode == 'deterministic':
        rel = _bridge_tensor(k, t, x, y, field, cfg.time_nodes, cfg.hermite_nodes)
        coarse = _bridge_tensor(k, t, x, y, field, cfg.time_nodes - 1, cfg.hermite_nodes)
        err = abs(rel - coarse)
    else:
        rel, err = _bridge_importance(k, t, x, y, field, cfg.samples, cfg.strata, cfg.seed)
    return SeriesTerm(k, p * rel, p * err, rel, err, log_p)


def _as_point(v, d) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (d,):
        raise DomainError(f'ожидалась точка размерности {d}, получено {v.shape}')
    return v


def series_term(k: int, t: float, x, y, cfg: SeriesConfig, level=None) -> SeriesTerm:
    """Î_k с оценкой ошибки; Î_0 = p(t,x,y) точно."""
    if k < 0:
        raise DomainError('k должно быть ≥ 0')
    if t <= 0.0:
        raise DomainError('t должно быть > 0')
    x, y = _as_point(x, cfg.d), _as_point(y, cfg.d)
    if k > 0 and not cfg.drift.is_zero:
        _check_contraction(cfg, t)
    return _term(k, t, x, y, cfg, cfg.level_for(level))


# ---------- СЖАТИЕ И ХВОСТ ----------

def contraction_factor(cfg: SeriesConfig, t: float) -> tuple[float, float, float]:
    """(ρ = C_δ·N_t^α(Σ|μ_i|), N, C_δ)."""
    c = cfg.c_delta if cfg.c_delta is not None else calibrate_c_delta(cfg.delta, cfg.d)
    n_kato = kato_norm_N(cfg.drift.abs_sum(), t, cfg.alpha)
    return c * n_kato, n_kato, c


def _check_contraction(cfg: SeriesConfig, t: float):
    if cfg.t_max_policy == 'off':
        return None
    rho, n_kato, c = contraction_factor(cfg, t)
    if rho > 0.5:
        msg = f't={t} > T_δ: C_δ·N_t = {rho:.4g} (C_δ={c:.4g}, N={n_kato:.4g}) > 1/2'
        if cfg.t_max_policy == 'enforce':
            raise NumericalRefusal(msg, value=rho)
        logger.warning('%s; продолжаем с эмпирическим хвостом', msg)
    return rho, n_kato, c


def truncation_bound(k: int, t: float, x, y, delta: float, n_kato: float, c_delta: float = 1.0) -> float:
    """Σ_{j>k} ρ^j·t^{−d/2}exp(−(1−δ)|x−y|²/2t) = ρ^{k+1}/(1−ρ)·G, ρ = C_δ·N."""
    rho = c_delta * n_kato
    if rho >= 1.0:
        raise NumericalRefusal(f'коэффициент сжатия ρ={rho:.4g} ≥ 1', value=rho)
    if rho == 0.0:
        return 0.0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = float(np.exp(log_g_kernel(1.0 - delta, t, x, y, x.size)))
    return float(rho ** (k + 1) / (1.0 - rho) * g)


def _empirical_tail(rel_terms) -> tuple[float, float | None]:
    """Геометрическая огибающая |J_k| ≈ Aρ̂^k по последним трём ненулевым членам."""
    mags = np.abs(np.asarray(rel_terms[1:], dtype=float))
    ks = np.arange(1, mags.size + 1)
    mask = mags > 0.0
    if mask.sum() == 0:
        return 0.0, 0.0
    if mask.sum() < 2:
        return float('inf'), None
    ks, mags = ks[mask][-3:], mags[mask][-3:]
    slope = np.polyfit(ks, np.log(mags), 1)[0]
    rho = float(np.exp(slope))
    if rho >= 1.0:
        return float('inf'), rho
    return float(mags[-1] * rho / (1.0 - rho)), rho


# ---------- СУММА РЯДА ----------

def _sum_series(t, x, y, cfg: SeriesConfig, tol: float, level) -> HeatKernelEstimate:
    d = cfg.d
    flags = [FLAG_OUTSIDE_THEORY] if d < 3 else []
    rho = None
    theory = False
    if cfg.t_max_policy != 'off':
        rho = _check_contraction(cfg, t)[0]
        theory = rho <= 0.5
        if theory and cfg.c_delta is None:
            flags.append(FLAG_CALIBRATED)
    first = _term(0, t, x, y, cfg, level)
    log_p, p = first.log_p, first.value
    rel, rel_err = [1.0], [0.0]
    trunc, quad = float('inf'), 0.0
    converged = False
    used_rho = rho
    for k in range(1, cfg.max_terms + 1):
        term = _term(k, t, x, y, cfg, level)
        rel.append(term.relative)
        rel_err.append(term.relative_error)
        quad_rel = float(np.sum(rel_err))
        total_rel = float(np.sum(rel))
        if theory:
            # та же граница, что truncation_bound, но сразу в долях p (p может исчезать)
            log_ratio = log_g_kernel(1.0 - cfg.delta, t, x, y, d) - log_p
            trunc_rel = float(rho ** (k + 1) / (1.0 - rho) * np.exp(log_ratio)) if rho > 0.0 else 0.0
        else:
            trunc_rel, used_rho = _empirical_tail(rel)
            if FLAG_EMPIRICAL_TAIL not in flags:
                flags.append(FLAG_EMPIRICAL_TAIL)
        trunc, quad = trunc_rel * p, quad_rel * p
        if trunc_rel + quad_rel < tol * abs(total_rel):
            converged = True
            break
    total_rel = float(np.sum(rel))
    value = p * total_rel
    log_value = log_p + np.log(total_rel) if total_rel > 0.0 else float('nan')
    if total_rel < 0.0:
        flags.append(FLAG_NEGATIVE)
        logger.warning('q(t=%g) < 0: %.3e, оставлено как есть', t, value)
    if not converged:
        flags.append(FLAG_UNCONVERGED)
        logger.warning('ряд параметрикса не сошёлся за %d членов (хвост %.2e, квадратура %.2e)',
                       cfg.max_terms, trunc, quad)
    return HeatKernelEstimate(
        value=value, terms=[p * r for r in rel], truncation_bound=trunc, quad_error=quad,
        converged=converged, term_errors=[p * e for e in rel_err], log_value=float(log_value),
        rho=used_rho, mollify_level=level, flags=flags,
    )


def heat_kernel(t: float, x, y, cfg: SeriesConfig, tol: float = 1e-2) -> HeatKernelEstimate:
    """
    q(t,x,y) = Σ_k I_k до выполнения хвост + ошибка квадратуры < tol·|q|
    (tol относительный) или до max_terms (флаг unconverged).
    """
    if t <= 0.0 or tol <= 0.0:
        raise DomainError('нужны t > 0 и tol > 0')
    x, y = _as_point(x, cfg.d), _as_point(y, cfg.d)
    if cfg.drift.is_zero:
        log_p = log_gaussian_p(t, x, y, cfg.d)
        flags = [FLAG_OUTSIDE_THEORY] if cfg.d < 3 else []
        p = float(np.exp(log_p))
        return HeatKernelEstimate(value=p, terms=[p], truncation_bound=0.0, quad_error=0.0, term_errors=[0.0],
                                  converged=True, log_value=log_p, rho=0.0, flags=flags)
    if cfg.mollify_level != 'auto' or cfg.drift.has_density:
        return _sum_series(t, x, y, cfg, tol, cfg.level_for())
    # мера без плотности: уровень n растёт, пока сдвиг q не станет < tol/2
    prev = _sum_series(t, x, y, cfg, tol, cfg.mollify_start)
    for level in range(cfg.mollify_start + 1, cfg.mollify_max + 1):
        cur = _sum_series(t, x, y, cfg, tol, level)
        if abs(cur.value - prev.value) < 0.5 * tol * abs(cur.value):
            return cur
        prev = cur
    prev.flags.append(FLAG_UNCONVERGED)
    logger.warning('уровень сглаживания не стабилизировался до n=%d', cfg.mollify_max)
    return prev


def heat_kernel_sweep(ts, xs, ys, cfg: SeriesConfig, tol: float = 1e-2) -> pd.DataFrame:
    """Таблица (t, x, y, value, trunc_bound, quad_err, terms_used, converged) по всем комбинациям."""
    rows = []
    for t in ts:
        for x in xs:
            for y in ys:
                est = heat_kernel(t, x, y, cfg, tol)
                exact = closed_form_density(cfg.drift, t, x, y)
                rows.append({
                    't': t, 'x': json.dumps(list(map(float, x))), 'y': json.dumps(list(map(float, y))),
                    'value': est.value, 'trunc_bound': est.truncation_bound, 'quad_err': est.quad_error,
                    'terms_used': est.terms_used, 'converged': est.converged,
                    'closed_form': exact,
                    'rel_error': abs(est.value - exact) / exact if exact else None,
                })
    return pd.DataFrame(rows)


class ParametrixKernel:
    """q, посчитанное рядом параметрикса, как ядро для Λ_t (дорого: ряд в каждой точке)."""

    def __init__(self, cfg: SeriesConfig, tol: float = 1e-2):
        self.cfg = cfg
        self.tol = tol
        self.d = cfg.d

    def density(self, s, x, y) -> np.ndarray:
        pts = np.atleast_2d(y)
        return np.array([heat_kernel(s, x, yi, self.cfg, self.tol).value for yi in pts])


# ---------- ЛЕММА О СВЁРТКЕ ----------

def _lemma_numerator(a1, a2, b: SignedMeasure, t, x, y, time_nodes, hermite_nodes) -> float:
    """∫_0^t∫ G_{a1}(t−s,x,z) b(z) G_{a2}(s,z,y) s^{−1/2} dz ds через гауссово произведение по z."""
    d = x.size
    s, ws = split_time_rule(t, time_nodes)
    xi, wxi = tensor_hermite(hermite_nodes, d)
    r2 = float(np.sum((x - y) ** 2))
    total = 0.0
    for si, wi in zip(s, ws):
        u = t - si
        prec = a1 / u + a2 / si
        mean = (a1 * x / u + a2 * y / si) / prec
        log_pref = -0.5 * d * (np.log(u) + np.log(si)) + 0.5 * d * np.log(2.0 * np.pi / prec) \
            - r2 / (2.0 * (u / a1 + si / a2))
        eb = float(np.sum(wxi * b.density_values(mean + xi / np.sqrt(prec))))
        total += wi * np.exp(log_pref) * eb / np.sqrt(si)
    return total


def lemma_ratio_report(a1: float, a2: float, b: SignedMeasure, t: float, grid,
                       alpha: float | None = None, time_nodes: int = 24, hermite_nodes: int = 5) -> dict:
    if not 0.0 < a1 < a2:
        raise DomainError('нужно 0 < a1 < a2')
    if t <= 0.0:
        raise DomainError('t должно быть > 0')
    alpha = 0.25 * a2 if alpha is None else alpha
    if b.is_zero:
        return {'ratio': 0.0, 'n_kato': 0.0, 'skipped': [], 'alpha': alpha, 't': t}
    n_kato = kato_norm_N(b, t, alpha)
    ratios, skipped = [], []
    for x, y in grid:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        log_g = log_g_kernel(a1, t, x, y, x.size)
        if log_g < LOG_UNDERFLOW:
            skipped.append((x.tolist(), y.tolist()))
            continue
        num = _lemma_numerator(a1, a2, b, t, x, y, time_nodes, hermite_nodes)
        ratios.append(num / (n_kato * np.exp(log_g)))
    if skipped:
        logger.warning('лемма о свёртке: пропущено %d точек с исчезающим G_{a1}', len(skipped))
    return {'ratio': float(max(ratios)) if ratios else float('nan'), 'n_kato': n_kato,
            'skipped': skipped, 'alpha': alpha, 't': t}


def convolution_lemma_ratio(a1: float, a2: float, b: SignedMeasure, t: float, grid,
                            alpha: float | None = None, **kwargs) -> float:
    """sup по парам (x, y) отношения свёртки к N_t^α(b)·G_{a1}(t,x,y)."""
    return lemma_ratio_report(a1, a2, b, t, grid, alpha, **kwargs)['ratio']


def lemma_grid(center, t: float, kappas=(0.0, 0.5, 1.0, 2.0)) -> list:
    """Пары (x, y): x в центре, y = x + κ√t·e_1."""
    x = np.asarray(center, dtype=float)
    e1 = np.zeros_like(x)
    e1[0] = 1.0
    return [(x, x + k * np.sqrt(t) * e1) for k in kappas]


# ---------- КАЛИБРОВКА C_δ ----------

def _calibrate_c_delta(delta: float, d: int) -> float:
    a1, a2 = 1.0 - delta, 1.0 - 0.5 * delta
    worst = 0.0
    for sigma in (0.5, 1.0):
        bump = GaussianBump(np.zeros(d), sigma, 1.0)
        for t in (0.1, 0.05):
            worst = max(worst, convolution_lemma_ratio(a1, a2, bump, t, lemma_grid(np.zeros(d), t)))
    # |∇p| ≤ (2π)^{−d/2} m_{δ/2} s^{−1/2} G_{1−δ/2}; константа точная
    return float((2.0 * np.pi) ** (-0.5 * d) * m_delta_unchecked(0.5 * delta) * worst)


@lru_cache(maxsize=32)
def calibrate_c_delta(delta: float, d: int = 3) -> float:
    """C_δ = (2π)^{−d/2}·m_{δ/2}·max отношения леммы на эталонном наборе шапочек; кэш на диске через joblib."""
    value = extensions.memory.cache(_calibrate_c_delta)(float(delta), int(d))
    logger.info('C_δ откалиброван: δ=%g, d=%d, C_δ=%.4g', delta, d, value)
    return value


def t_delta(drift: DriftMeasure, delta: float, c_delta: float | None = None,
            alpha: float | None = None, max_halvings: int = 30) -> float:
    """Наибольшее диадическое t = 2^{−j} с C_δ·N_t^α(Σ|μ_i|) ≤ 1/2."""
    c = c_delta if c_delta is not None else calibrate_c_delta(delta, drift.d)
    alpha = 0.25 * (1.0 - 0.5 * delta) if alpha is None else alpha
    mu = drift.abs_sum()
    if drift.is_zero:
        return float('inf')
    for j in range(max_halvings + 1):
        t = 2.0 ** (-j)
        if c * kato_norm_N(mu, t, alpha) <= 0.5:
            return t
    raise BudgetExhausted(f'T_δ < 2^-{max_halvings}: сжатие не достигнуто')


# ---------- СЕРТИФИКАТ ВЕРХНЕЙ ОЦЕНКИ ----------

@dataclass
class CertificateReport:
    t: float
    x: list
    y: list
    q: float
    bound: float
    error: float
    passed: bool
    closed_form: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def upper_bound_certificate(t: float, x, y, delta: float, cfg: SeriesConfig, tol: float = 1e-2) -> CertificateReport:
    """Проверка q(t,x,y) ≤ 2t^{−d/2}exp(−(1−δ)|x−y|²/2t) с учётом погрешностей."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f'δ={delta} вне (0,1)')
    x, y = _as_point(x, cfg.d), _as_point(y, cfg.d)
    est = heat_kernel(t, x, y, cfg, tol)
    bound = 2.0 * float(np.exp(log_g_kernel(1.0 - delta, t, x, y, cfg.d)))
    err = est.truncation_bound + est.quad_error
    exact = closed_form_density(cfg.drift, t, x, y)
    passed = est.value - err <= bound
    if exact is not None:
        passed = passed and exact <= bound
    return CertificateReport(t=t, x=x.tolist(), y=y.tolist(), q=est.value, bound=bound, error=err,
                             passed=bool(passed), closed_form=exact, flags=list(est.flags))
