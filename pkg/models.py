# models.py
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from errors import DomainError


# ---------- СТАТУСЫ И ФЛАГИ ----------

# Флаги диагностики, которые попадают в отчёты (не исключения)
FLAG_OUTSIDE_THEORY = 'outside_theory_guarantees'   # d < 3
FLAG_RARE_EVENT = 'rare_event'                      # ожидаемых превышений < 10
FLAG_ZERO_HITS = 'zero_exceedances'                 # ни одного превышения, только верхняя граница
FLAG_DETERMINISTIC_ZERO = 'deterministic_zero'      # δ ≥ ε·sup|b|: событие невозможно
FLAG_NEGATIVE = 'negative_value'                    # отрицательная оценка плотности
FLAG_UNCONVERGED = 'unconverged'                    # не достигнут допуск
FLAG_EMPIRICAL_TAIL = 'empirical_tail'              # хвост ряда оценён по подгонке
FLAG_CALIBRATED = 'empirically_calibrated'          # C_δ подобран численно
FLAG_FEW_SAMPLES = 'few_effective_samples'          # KDE: мало точек возле y
FLAG_EXCLUDED_PATHS = 'excluded_paths'              # траектории с невычислимым сносом
FLAG_NOT_KATO = 'not_in_K_d1_at_this_resolution'
FLAG_ENVELOPE_TV = 'envelope_total_variation'       # |μ| заменена мажорантой Σ|c||μ_i|

Z95 = 1.96


# ---------- ОЦЕНКИ МОНТЕ-КАРЛО ----------

@dataclass
class EstimatorResult:
    mean: float
    stderr: float
    n_samples: int
    upper95: float | None = None       # односторонняя граница (правило трёх / Клоппер–Пирсон)
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)

    @classmethod
    def from_samples(cls, samples, **details) -> 'EstimatorResult':
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            raise DomainError('пустая выборка')
        se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(mean=float(samples.mean()), stderr=se, n_samples=n, details=details)

    @classmethod
    def from_moments(cls, total: float, total_sq: float, n: int, **details) -> 'EstimatorResult':
        """Сборка из накопленных сумм Σx и Σx² (редукция по блокам)."""
        if n == 0:
            raise DomainError('пустая выборка')
        mean = total / n
        var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
        return cls(mean=float(mean), stderr=float(np.sqrt(var / n)), n_samples=int(n), details=details)

    @classmethod
    def from_proportion(cls, hits: int, n: int, **details) -> 'EstimatorResult':
        """
        Доля превышений. При hits == 0: правило трёх (3/n),
        иначе верхняя граница Клоппера–Пирсона.
        """
        if n <= 0:
            raise DomainError('пустая выборка')
        p = hits / n
        se = float(np.sqrt(p * (1.0 - p) / n))
        res = cls(mean=float(p), stderr=se, n_samples=int(n), details=details)
        res.details['hits'] = int(hits)
        if hits == 0:
            res.upper95 = 3.0 / n
            res.flags.append(FLAG_ZERO_HITS)
        else:
            res.upper95 = float(stats.beta.ppf(0.975, hits + 1, n - hits)) if hits < n else 1.0
            res.details.setdefault('lower95', float(stats.beta.ppf(0.025, hits, n - hits + 1)))
        if hits < 10:
            res.flags.append(FLAG_RARE_EVENT)
        return res

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {
            'mean': self.mean, 'stderr': self.stderr, 'ci95_lo': lo, 'ci95_hi': hi,
            'n_samples': self.n_samples, 'upper95': self.upper95,
            'flags': list(self.flags), **self.details,
        }

    def __repr__(self) -> str:
        return f'<EstimatorResult mean={self.mean:.6g} se={self.stderr:.3g} n={self.n_samples}>'


# ---------- ПАРАМЕТРИКС ----------

@dataclass
class HeatKernelEstimate:
    value: float
    terms: list
    truncation_bound: float
    quad_error: float
    converged: bool
    term_errors: list = field(default_factory=list)
    log_value: float = float('nan')     # log p + log Σ I_k/p, конечен даже когда p уходит в ноль
    rho: float | None = None            # коэффициент сжатия (теоретический или подогнанный)
    mollify_level: int | None = None
    flags: list = field(default_factory=list)

    @property
    def terms_used(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        return {
            'value': self.value, 'log_value': self.log_value,
            'trunc_bound': self.truncation_bound, 'quad_err': self.quad_error,
            'terms_used': self.terms_used, 'converged': self.converged,
            'terms': list(self.terms), 'term_errors': list(self.term_errors),
            'rho': self.rho, 'mollify_level': self.mollify_level, 'flags': list(self.flags),
        }

    def __repr__(self) -> str:
        return (f'<HeatKernelEstimate value={self.value:.6g} terms={self.terms_used} '
                f'trunc={self.truncation_bound:.2g} quad={self.quad_error:.2g} converged={self.converged}>')


# ---------- КЛАСС КАТО ----------

@dataclass
class KatoProfile:
    radii: np.ndarray
    values: np.ndarray
    threshold: float = 1e-2
    flags: list = field(default_factory=list)
    residuals: np.ndarray | None = None

    def fitted_exponent(self) -> float:
        """Наклон log value по log r (по положительным значениям)."""
        mask = (self.values > 0) & (self.radii > 0)
        if mask.sum() < 2:
            return float('nan')
        fit = stats.linregress(np.log(self.radii[mask]), np.log(self.values[mask]))
        return float(fit.slope)

    @property
    def consistent_with_kato(self) -> bool:
        if FLAG_NOT_KATO in self.flags:
            return False
        return bool(self.values[-1] < self.threshold)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'r': self.radii, 'value': self.values})

    def __repr__(self) -> str:
        return f'<KatoProfile n={len(self.radii)} last={self.values[-1]:.3g} exponent={self.fitted_exponent():.3f}>'


# ---------- АСИМПТОТИКА ----------

@dataclass
class PiecewiseLinearPath:
    knots: np.ndarray
    values: np.ndarray      # (m, d)

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.knots.ndim != 1 or self.knots.size < 2:
            raise DomainError('путь: нужно минимум два узла')
        if self.values.shape[0] != self.knots.size:
            raise DomainError('путь: число значений не совпадает с числом узлов')
        if self.knots[0] != 0.0 or self.knots[-1] != 1.0:
            raise DomainError('путь: узлы должны идти от 0 до 1')
        if np.any(np.diff(self.knots) <= 0.0):
            raise DomainError('путь: узлы должны строго возрастать')

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.values[0]

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.interp(t, self.knots, self.values[:, i]) for i in range(self.dimension)], axis=-1)

    def refine(self, n_knots: int) -> 'PiecewiseLinearPath':
        """Тот же путь на равномерной сетке, объединённой с исходными узлами."""
        grid = np.union1d(np.linspace(0.0, 1.0, n_knots), self.knots)
        return PiecewiseLinearPath(grid, self.evaluate(grid))

    @classmethod
    def segment(cls, x, y) -> 'PiecewiseLinearPath':
        return cls(np.array([0.0, 1.0]), np.vstack([x, y]))

    def __repr__(self) -> str:
        return f'<PiecewiseLinearPath knots={self.knots.size} d={self.dimension}>'


@dataclass
class AsymptoticCurve:
    t_grid: np.ndarray
    values: np.ndarray          # t·log q̂
    errors: np.ndarray
    reference: np.ndarray       # бездрейфовая формула
    extrapolated_limit: float = float('nan')
    limit_error: float = float('nan')
    excluded: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.t_grid, 'tlogq': self.values,
                             'err': self.errors, 'reference': self.reference})

    def __repr__(self) -> str:
        return f'<AsymptoticCurve n={len(self.t_grid)} limit={self.extrapolated_limit:.4f}±{self.limit_error:.2g}>'


# ---------- ТРАЕКТОРИИ ----------

@dataclass
class PathEnsemble:
    times: np.ndarray
    x0: np.ndarray
    brownian: np.ndarray        # (paths, len(times), d), накопленный W
    drift_part: np.ndarray      # (paths, len(times), d), накопленный A
    states: np.ndarray          # x0 + W + A
    excluded: int = 0
    seed: int | None = None

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def brownian_increments(self) -> np.ndarray:
        return np.diff(self.brownian, axis=1)

    @property
    def drift_increments(self) -> np.ndarray:
        return np.diff(self.drift_part, axis=1)

    def time_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[idx], t, rtol=1e-9, atol=1e-12):
            raise DomainError(f'момент t={t} не лежит на сетке ансамбля')
        return idx

    def at(self, t: float) -> np.ndarray:
        return self.states[:, self.time_index(t), :]

    def to_frame(self) -> pd.DataFrame:
        n, m, d = self.states.shape
        data = {
            'path_id': np.repeat(np.arange(n), m),
            't': np.tile(self.times, n),
        }
        for name, arr in (('X', self.states), ('W', self.brownian), ('A', self.drift_part)):
            for i in range(d):
                data[f'{name}{i + 1}'] = arr[:, :, i].reshape(-1)
        return pd.DataFrame(data)

    def __repr__(self) -> str:
        return f'<PathEnsemble paths={self.n_paths} times={len(self.times)} excluded={self.excluded}>'
