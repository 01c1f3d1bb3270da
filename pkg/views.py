# views.py
"""
Обработчики экспериментов. Каждый зарегистрирован в registry под своим
именем и возвращает RunResult: таблицы для CSV плюс сводку для JSON.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
import pandas as pd
from scipy import stats

from asymptotics import (
    exp_equivalence_diag, ldp_tube_experiment, paired_tube_comparison,
    varadhan_curve, varadhan_panel, varadhan_symmetry, varadhan_upper_curve,
)
from errors import DomainError
from forms import ExperimentConfig, measure_from_spec
from kernels import (
    alpha_coeff, alpha_step, m_delta, m_delta_numeric, phi_bound, phi_even_odd_split, phi_series_with_tail,
)
from measures import (
    Density, DriftMeasure, EnvelopeKernel, GaussianKernel, kato_membership_profile, kato_norm_report, lambda_norm,
)
from parametrix import (
    ParametrixKernel, closed_form_density, constant_drift_terms, convolution_lemma_ratio, heat_kernel,
    heat_kernel_sweep, lemma_grid, t_delta, upper_bound_certificate,
)
from simulate import (
    ball_probability, chapman_lower_bound, coupled_levels, estimate_laplace, estimate_moments, kde_density,
    second_moment_oracle, simulate_paths, sup_A_chernoff_bound, sup_A_laplace_bound, sup_A_tail,
)

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    tables: dict = field(default_factory=dict)      # имя → DataFrame
    summary: dict = field(default_factory=dict)


class ExperimentRegistry:
    """Реестр обработчиков: имя эксперимента → функция(params, seed, workers)."""

    def __init__(self, name: str):
        self.name = name
        self.handlers = {}

    def handler(self, experiment: str):
        def register(func):
            self.handlers[experiment] = func
            return func
        return register

    def dispatch(self, config: ExperimentConfig, workers: int | None = None) -> RunResult:
        handler = self.handlers.get(config.experiment)
        if handler is None:
            raise DomainError(f'нет обработчика для {config.experiment!r}')
        params = config.params
        logger.info('эксперимент %s/%s, seed=%d', config.experiment, params.operation, config.seed)
        result = handler(params, config.seed, workers)
        result.summary.setdefault('experiment', config.experiment)
        result.summary.setdefault('operation', params.operation)
        return result


registry = ExperimentRegistry('lab')


def _within(estimate: float, target: float, stderr: float, k: float = 3.0) -> bool:
    return bool(abs(estimate - target) <= k * stderr + 1e-12 * max(1.0, abs(target)))


# ========= КАТО =========

@registry.handler('kato')
def kato(params, seed, workers):
    d = params.dimension
    if params.operation == 't-delta':
        drift = params.drift.build()
        value = t_delta(drift, params.delta, params.c_delta)
        return RunResult(summary={'t_delta': value, 'delta': params.delta})

    mu_abs = measure_from_spec(params.measure, d).total_variation()

    if params.operation == 'profile':
        return _profile_result(mu_abs, params)
    if params.operation == 'lambda':
        kernel = _lambda_kernel(params, d, seed)

    rows = []
    for t in params.t_grid:
        if params.operation in ('norm', 'norm-and-profile'):
            report = kato_norm_report(mu_abs, t, params.alpha, workers=workers)
            row = {'t': t, 'alpha': params.alpha, 'value': report.value, 'residual': report.residual,
                   'flags': ';'.join(report.flags)}
            # |μ| = c·dx: N_t^α = c(π/α)^{d/2}·2√t
            if isinstance(mu_abs, Density) and mu_abs.constant is not None:
                row['closed_form'] = mu_abs.constant * (np.pi / params.alpha) ** (0.5 * d) * 2.0 * np.sqrt(t)
        else:
            value = lambda_norm(mu_abs, t, kernel, n_panels=params.time_panels,
                                spatial_nodes=params.spatial_nodes, workers=workers)
            row = {'t': t, 'kernel': params.kernel, 'value': value}
            if isinstance(mu_abs, Density) and mu_abs.constant is not None and params.kernel == 'gaussian':
                row['closed_form'] = mu_abs.constant * 2.0 * np.sqrt(t)
        rows.append(row)
    frame = pd.DataFrame(rows)
    summary = {}
    if 'closed_form' in frame:
        rel = (frame['value'] - frame['closed_form']).abs() / frame['closed_form'].where(frame['closed_form'] != 0)
        summary['max_rel_error'] = float(rel.fillna(0.0).max())
    positive = frame[(frame['value'] > 0) & np.isfinite(frame['value'])]
    if len(positive) >= 2:
        summary['rate_exponent'] = float(stats.linregress(np.log(positive['t']), np.log(positive['value'])).slope)
    if params.operation == 'norm-and-profile':
        extra = _profile_result(measure_from_spec(params.profile_measure, d).total_variation(), params)
        extra.tables['norm'] = frame
        extra.summary.update(summary)
        return extra
    return RunResult(tables={params.operation: frame}, summary=summary)


def _lambda_kernel(params, d: int, seed: int):
    if params.kernel == 'gaussian':
        return GaussianKernel(d)
    if params.kernel == 'envelope':
        return EnvelopeKernel(d, *params.envelope)
    return ParametrixKernel(params.series.build(params.drift.build(), seed))


def _profile_result(mu_abs, params) -> RunResult:
    profile = kato_membership_profile(mu_abs, params.radii, params.threshold)
    return RunResult(
        tables={'profile': profile.to_frame()},
        summary={'fitted_exponent': profile.fitted_exponent(),
                 'consistent_with_kato': profile.consistent_with_kato, 'flags': profile.flags},
    )


# ========= ПРОВЕРКИ ЯДЕР =========

@registry.handler('kernel-checks')
def kernel_checks(params, seed, workers):
    tables, summary = {}, {}
    op = params.operation
    if op in ('phi', 'all'):
        rows = []
        for z in np.linspace(0.0, params.z_max, params.z_points):
            value, tail, n = phi_series_with_tail(float(z))
            even, odd = phi_even_odd_split(float(z))
            bound = phi_bound(float(z))
            rows.append({'z': z, 'phi': value, 'tail': tail, 'terms': n, 'bound': bound,
                         'even_plus_odd': even + odd, 'holds': bool(value <= bound * (1.0 + 1e-12))})
        frame = pd.DataFrame(rows)
        tables['phi'] = frame
        summary['phi_bound_holds'] = bool(frame['holds'].all())
    if op in ('m-delta', 'all'):
        rows = [{'delta': dl, 'closed_form': m_delta(dl), 'numeric': m_delta_numeric(dl)} for dl in params.deltas]
        frame = pd.DataFrame(rows)
        frame['abs_diff'] = (frame['closed_form'] - frame['numeric']).abs()
        tables['m_delta'] = frame
        summary['m_delta_max_diff'] = float(frame['abs_diff'].max())
    if op in ('alpha', 'all'):
        rows, running = [], 1.0
        for n in range(1, params.max_n + 1):
            if n >= 2:
                running *= alpha_step(n - 1)
            rows.append({'n': n, 'alpha': alpha_coeff(n), 'by_steps': running})
        tables['alpha'] = pd.DataFrame(rows)
    return RunResult(tables=tables, summary=summary)


# ========= РЯД ПАРАМЕТРИКСА =========

@registry.handler('series')
def series(params, seed, workers):
    drift = params.drift.build()
    cfg = params.series.build(drift, seed)
    op = params.operation

    if op == 'heat-kernel':
        x, y = np.asarray(params.x, dtype=float), np.asarray(params.y, dtype=float)
        est = heat_kernel(params.t, x, y, cfg, params.tol)
        p = est.terms[0]
        terms = pd.DataFrame({'k': np.arange(est.terms_used), 'value': est.terms,
                              'relative': np.array(est.terms) / p, 'error': est.term_errors})
        summary = {'t': params.t, 'x': params.x, 'y': params.y, **est.to_dict()}
        exact = closed_form_density(drift, params.t, x, y)
        if exact is not None:
            summary['closed_form'] = exact
            summary['rel_error'] = abs(est.value - exact) / exact
        if drift.is_constant and not drift.is_zero:
            oracle = constant_drift_terms(est.terms_used - 1, params.t, x, y, drift.constant_vector())
            terms['taylor'] = oracle
        return RunResult(tables={'terms': terms}, summary=summary)

    if op == 'sweep':
        frame = heat_kernel_sweep(params.ts, params.xs, params.ys, cfg, params.tol)
        rel = frame['rel_error'].dropna()
        return RunResult(tables={'sweep': frame},
                         summary={'max_rel_error': float(rel.max()) if len(rel) else None})

    if op == 'lemma-ratio':
        d = drift.d
        b = measure_from_spec(params.measure, d) if params.measure is not None else drift.abs_sum()
        center = np.zeros(d) if params.center is None else np.asarray(params.center, dtype=float)
        rows = [{'t': t, 'ratio': convolution_lemma_ratio(params.a1, params.a2, b, t,
                                                         lemma_grid(center, t, params.kappas))}
                for t in params.lemma_ts]
        frame = pd.DataFrame(rows)
        lo, hi = frame['ratio'].min(), frame['ratio'].max()
        return RunResult(tables={'lemma_ratio': frame},
                         summary={'a1': params.a1, 'a2': params.a2, 'finite': bool(np.isfinite(frame['ratio']).all()),
                                  'relative_spread': float((hi - lo) / lo) if lo > 0 else float('inf')})

    if op == 'certificate':
        report = upper_bound_certificate(params.t, params.x, params.y, cfg.delta, cfg, params.tol)
        return RunResult(summary=report.to_dict())

    value = t_delta(drift, cfg.delta, cfg.c_delta, cfg.alpha)
    return RunResult(summary={'t_delta': value, 'delta': cfg.delta})


# ========= МОНТЕ-КАРЛО =========

@registry.handler('simulate')
def simulate(params, seed, workers):
    drift = params.drift.build()
    cfg = params.sde.build(drift, seed)
    x = np.asarray(params.x, dtype=float)
    op = params.operation

    if op == 'paths':
        ens = simulate_paths(cfg, x, params.record_times, workers)
        return RunResult(tables={'paths': ens.to_frame()},
                         summary={'paths': ens.n_paths, 'excluded': ens.excluded, 'times': len(ens.times)})

    if op == 'ball':
        runs = [('drift', cfg)]
        if params.with_drift_free and not drift.is_zero:
            runs.append(('drift_free', replace(cfg, drift=DriftMeasure.zero(drift.d), mollify_level=None)))
        rows = []
        for label, run_cfg in runs:
            for case in params.balls:
                res = ball_probability(run_cfg, x, case.y, case.eps_ball, case.r, workers)
                row = {'dynamics': label if not run_cfg.drift.is_zero else 'drift_free', 'y': case.y,
                       'eps_ball': case.eps_ball, 'r': case.r, 'estimate': res.mean, 'stderr': res.stderr,
                       'upper95': res.upper95, 'lower_bound': res.details['lower_bound'],
                       'flags': ';'.join(res.flags)}
                row['bound_ok'] = bool(res.mean >= row['lower_bound'] - 3.0 * res.stderr)
                if 'exact' in res.details:
                    row['exact'] = res.details['exact']
                    row['oracle_ok'] = _within(res.mean, row['exact'], res.stderr)
                rows.append(row)
        frame = pd.DataFrame(rows)
        summary = {'all_bounds_ok': bool(frame['bound_ok'].all())}
        if 'oracle_ok' in frame:
            summary['all_oracles_ok'] = bool(frame['oracle_ok'].dropna().astype(bool).all())
        return RunResult(tables={'ball': frame}, summary=summary)

    if op == 'kde':
        ens = simulate_paths(cfg.with_horizon(params.t), x, record_times=[params.t], workers=workers)
        res = kde_density(ens, ens.times[-1], params.y, params.bandwidth)
        summary = res.to_dict()
        exact = closed_form_density(drift, params.t, x, np.asarray(params.y, dtype=float))
        if exact is not None:
            summary['closed_form'] = exact
        return RunResult(summary=summary)

    if op == 'coupled':
        return RunResult(tables={'coupled': coupled_levels(cfg, x, params.levels)})

    if op == 'chapman':
        series_cfg = params.series.build(drift, seed)
        report = chapman_lower_bound(params.t, params.eta, params.eps_ball, x, params.y, cfg, series_cfg,
                                     workers=workers)
        return RunResult(summary=report.to_dict())

    res = sup_A_tail(cfg, x, params.delta, params.eps, workers)
    summary = res.to_dict()
    summary['chernoff_bound'] = sup_A_chernoff_bound(drift, params.delta, params.eps, cfg.envelope)
    summary['laplace_bound_lambda1'] = sup_A_laplace_bound(drift, 1.0, params.eps, cfg.envelope)
    return RunResult(summary=summary)


# ========= МОМЕНТЫ =========

@registry.handler('moments')
def moments(params, seed, workers):
    dynamics = params.drift.build()
    cfg = params.sde.build(dynamics, seed)
    x = np.asarray(params.x, dtype=float)
    f = measure_from_spec(params.functional, dynamics.d) if params.functional is not None else None
    rows = []
    if params.operation == 'moment':
        for t in params.ts:
            results = estimate_moments(cfg, x, params.powers, t, f, workers)
            for n, res in results.items():
                bound = res.details['bound']
                row = {'t': t, 'n': n, 'estimate': res.mean, 'stderr': res.stderr, 'bound': bound,
                       'holds': bool(res.mean <= bound + 3.0 * res.stderr), 'flags': ';'.join(res.flags)}
                if params.oracle and n == 2 and dynamics.is_zero:
                    target = f if f is not None else dynamics.abs_sum()
                    row['oracle'] = second_moment_oracle(target, x, t)
                    row['oracle_ok'] = _within(res.mean, row['oracle'], res.stderr)
                rows.append(row)
    else:
        for t in params.ts:
            for lam in params.lambdas:
                res = estimate_laplace(cfg, x, lam, t, f, workers)
                bound = res.details['bound']
                rows.append({'t': t, 'lambda': lam, 'estimate': res.mean, 'stderr': res.stderr, 'bound': bound,
                             'bound_series': res.details['bound_series'],
                             'holds': bool(res.mean <= bound + 3.0 * res.stderr), 'flags': ';'.join(res.flags)})
    frame = pd.DataFrame(rows)
    summary = {'all_hold': bool(frame['holds'].all())}
    if 'oracle_ok' in frame:
        summary['oracle_ok'] = bool(frame['oracle_ok'].dropna().astype(bool).all())
    return RunResult(tables={params.operation: frame}, summary=summary)


# ========= ВАРАДАН =========

@registry.handler('varadhan')
def varadhan(params, seed, workers):
    drift = params.drift.build()
    cfg = params.sde.build(drift, seed) if params.mode == 'kde' else params.series.build(drift, seed)

    if params.operation == 'panel':
        frame = varadhan_panel(params.pairs, params.t_grid, params.mode, cfg, params.tol, workers)
        return RunResult(tables={'panel': frame}, summary={'max_deviation': frame.attrs['max_deviation']})

    if params.operation == 'symmetry':
        return RunResult(summary=varadhan_symmetry(params.x, params.y, params.t_grid, params.mode, cfg,
                                                   params.tol, workers))

    x, y = np.asarray(params.x, dtype=float), np.asarray(params.y, dtype=float)
    curve = varadhan_curve(x, y, params.t_grid, params.mode, cfg, params.tol, workers)
    frame = curve.to_frame()
    distance = float(np.linalg.norm(x - y))
    if params.upper_delta is not None:
        frame['upper'] = varadhan_upper_curve(params.upper_delta, frame['t'].to_numpy(), distance, drift.d)
    target = -0.5 * distance ** 2
    summary = {'extrapolated_limit': curve.extrapolated_limit, 'limit_error': curve.limit_error,
               'target': target, 'deviation': abs(curve.extrapolated_limit - target),
               'excluded': curve.excluded, 'flags': curve.flags}
    if params.mode == 'exact' and len(frame):
        summary['max_rel_to_reference'] = float(
            ((frame['tlogq'] - frame['reference']).abs() / frame['reference'].abs()).max())
    return RunResult(tables={'curve': frame}, summary=summary)


# ========= БОЛЬШИЕ УКЛОНЕНИЯ =========

@registry.handler('ldp')
def ldp(params, seed, workers):
    drift = params.drift.build()
    cfg = params.sde.build(drift, seed)
    x = np.asarray(params.x, dtype=float)

    if params.operation == 'exp-equivalence':
        frame = exp_equivalence_diag(x, params.delta, params.eps_grid, cfg, workers)
        return RunResult(tables={'exp_equivalence': frame},
                         summary={'upper_decreasing': frame.attrs['upper_decreasing'], 'delta': params.delta,
                                  'sampled_rows': frame.attrs['sampled_rows'],
                                  'sampled_decreasing': frame.attrs['sampled_decreasing']})

    path = params.path.build()
    if params.operation == 'paired':
        frame = paired_tube_comparison(x, path, params.rho, params.eps_grid, cfg, workers)
        return RunResult(tables={'paired': frame}, summary={'rho': params.rho})

    frame = ldp_tube_experiment(x, path, params.rho, params.eps_grid, cfg, workers)
    last = frame.iloc[-1]
    return RunResult(tables={'tube': frame},
                     summary={'rho': params.rho, 'reference': float(last['reference']),
                              'smallest_eps_gap': float(abs(last['estimate'] - last['reference']))})
