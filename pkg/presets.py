# presets.py
"""
Встроенные конфиги воспроизведения: по одному на каждый критерий приёмки
плюс бездрейфовые варианты. Каждый пресет: обычный ExperimentConfig.
"""
import copy

from errors import ConfigInvalid

ORIGIN = [0.0, 0.0, 0.0]
E1 = [1.0, 0.0, 0.0]


def _bump(center=ORIGIN, sigma=0.5, height=1.0):
    return {'dimension': 3, 'kind': 'bump', 'center': list(center), 'sigma': sigma, 'height': height,
            'direction': E1}


ZERO_D3 = {'dimension': 3, 'kind': 'zero'}

# -------- Каталог --------

PRESETS = {
    'constant-drift-oracle': {
        'criterion': 1,
        'description': 'b ≡ (1,0,0), t = 0.5: ряд параметрикса против сдвинутой гауссианы и частей Тейлора',
        'config': {
            'experiment': 'series',
            'parameters': {
                'operation': 'heat-kernel',
                'drift': {'dimension': 3, 'kind': 'constant', 'vector': E1},
                'series': {'max_terms': 4, 'time_nodes': 3, 'hermite_nodes': 2, 't_max_policy': 'off'},
                't': 0.5, 'x': ORIGIN, 'y': [1.0, 1.0, 0.0], 'tol': 1e-2,
            },
        },
    },
    'ou-oracle': {
        'criterion': 2,
        'description': 'b(x) = −0.4x, t = 0.25: ряд против точной плотности ОУ в 5 точках',
        'config': {
            'experiment': 'series',
            'parameters': {
                'operation': 'sweep',
                'drift': {'dimension': 3, 'kind': 'ou', 'gamma': 0.4},
                'series': {'max_terms': 4, 'time_nodes': 2, 'hermite_nodes': 2, 't_max_policy': 'warn'},
                'ts': [0.25], 'xs': [ORIGIN],
                'ys': [ORIGIN, [0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.3, 0.3, 0.0], [-0.3, 0.2, 0.3]],
                'tol': 1e-2,
            },
        },
    },
    'moment-bound-bump': {
        'criterion': 3,
        'description': 'моменты функционала шапочки при b = 0: граница n!α_n(√tΛ_t)^n и оракул n = 2',
        'config': {
            'experiment': 'moments',
            'parameters': {
                'operation': 'moment',
                'drift': ZERO_D3,
                'functional': {'kind': 'density', 'family': 'gaussian_bump', 'center': ORIGIN, 'sigma': 0.5},
                'sde': {'step': 1e-3, 'horizon': 0.2, 'paths': 100000},
                'x': ORIGIN, 'powers': [1, 2, 3], 'ts': [0.1, 0.2], 'oracle': True,
            },
        },
    },
    'laplace-bound-bump': {
        'criterion': 4,
        'description': 'E exp(λ∫|b|) ≤ 2exp(2λ²tΛ_t²) для сноса-шапочки, λ ∈ {0.5, 1, 2}',
        'config': {
            'experiment': 'moments',
            'parameters': {
                'operation': 'laplace',
                'drift': _bump(),
                'sde': {'step': 1e-3, 'horizon': 0.1, 'paths': 100000},
                'x': ORIGIN, 'ts': [0.1], 'lambdas': [0.5, 1.0, 2.0],
            },
        },
    },
    'phi-mdelta-identities': {
        'criterion': 5,
        'description': 'Φ(z) ≤ (1+z)e^{z²} на 50 точках [0,5]; sup r·e^{−δr²/2} = 1/√(eδ)',
        'config': {
            'experiment': 'kernel-checks',
            'parameters': {'operation': 'all', 'z_max': 5.0, 'z_points': 50},
        },
    },
    'lemma-ratio-bump': {
        'criterion': 6,
        'description': 'отношение леммы о свёртке для шапочки, (a1, a2) = (0.5, 0.75), t ∈ {0.1, 0.05, 0.025}',
        'config': {
            'experiment': 'series',
            'parameters': {
                'operation': 'lemma-ratio',
                'drift': _bump(),
                'a1': 0.5, 'a2': 0.75, 'lemma_ts': [0.1, 0.05, 0.025],
            },
        },
    },
    'varadhan-bump-d3': {
        'criterion': 7,
        'description': 't log q для сноса-шапочки, |x−y| = 1: экстраполированный предел около −0.5',
        'config': {
            'experiment': 'varadhan',
            'parameters': {
                'operation': 'curve', 'mode': 'parametrix',
                'drift': _bump(center=[0.5, 0.0, 0.0]),
                'series': {'max_terms': 4, 'time_nodes': 2, 'hermite_nodes': 2, 't_max_policy': 'warn'},
                'x': ORIGIN, 'y': E1, 't_grid': [0.1, 0.05, 0.025, 0.0125], 'tol': 1e-2,
                'upper_delta': 0.3,
            },
        },
    },
    'varadhan-drift-free': {
        'criterion': None,           # вариант к критерию 7
        'description': 't log p при b = 0 по замкнутой формуле: совпадение с эталоном до 1e-12',
        'config': {
            'experiment': 'varadhan',
            'parameters': {
                'operation': 'curve', 'mode': 'exact', 'drift': ZERO_D3,
                'x': ORIGIN, 'y': E1, 't_grid': [0.1, 0.05, 0.025, 0.0125],
            },
        },
    },
    'exp-equivalence-bump': {
        'criterion': 8,
        'description': 'ε log P̂(sup|A_{εt}| > 0.5) для шапочки высоты 6 на ε ∈ {0.2, 0.1, 0.05}; '
                       'при ε = 0.05 δ ≥ ε·sup|b|, строка: точный ноль (hi = −∞); без превышений hi = ε·log(3/n) '
                       'растёт при убывании ε; тренд Монте-Карло: sampled_decreasing в сводке',
        'config': {
            'experiment': 'ldp',
            'parameters': {
                'operation': 'exp-equivalence',
                'drift': _bump(height=6.0),
                'sde': {'step': 1e-3, 'horizon': 0.2, 'paths': 100000},
                'x': ORIGIN, 'delta': 0.5, 'eps_grid': [0.2, 0.1, 0.05],
            },
        },
    },
    'ball-probability-bump': {
        'criterion': 9,
        'description': 'P_x(X_r ∈ B(y,ε)) против гауссовой квадратуры (b = 0) и нижней оценки (шапочка)',
        'config': {
            'experiment': 'simulate',
            'parameters': {
                'operation': 'ball',
                'drift': _bump(),
                'sde': {'step': 1e-3, 'horizon': 0.1, 'paths': 100000},
                'x': ORIGIN,
                'with_drift_free': True,
                'balls': [
                    {'y': [0.2, 0.0, 0.0], 'eps_ball': 0.2, 'r': 0.05},
                    {'y': [0.2, 0.0, 0.0], 'eps_ball': 0.2, 'r': 0.1},
                    {'y': ORIGIN, 'eps_ball': 0.1, 'r': 0.05},
                    {'y': [0.3, 0.1, 0.0], 'eps_ball': 0.25, 'r': 0.1},
                    {'y': ORIGIN, 'eps_ball': 0.3, 'r': 0.1},
                ],
            },
        },
    },
    'kato-lebesgue-cantor': {
        'criterion': 10,
        'description': 'N_t^α(Lebesgue) = 2(π/α)^{3/2}√t и профиль K_{d,1} для произведения с канторовой мерой',
        'config': {
            'experiment': 'kato',
            'parameters': {
                'operation': 'norm-and-profile', 'dimension': 3,
                'measure': {'kind': 'density', 'family': 'constant', 'value': 1.0},
                'profile_measure': {'kind': 'cantor_product', 'axis': 0, 'weight': 1.0, 'lo': 0.0, 'hi': 1.0},
                't_grid': [0.5, 0.25, 0.125], 'alpha': 0.25,
                'radii': [0.5, 0.25, 0.125, 0.0625, 0.03125],
            },
        },
    },
}


def list_presets() -> list[dict]:
    """Каталог: имя, номер критерия, эксперимент, описание."""
    return [
        {'name': name, 'criterion': entry['criterion'], 'experiment': entry['config']['experiment'],
         'description': entry['description']}
        for name, entry in PRESETS.items()
    ]


def preset_config(name: str, seed: int | None = None) -> dict:
    try:
        config = copy.deepcopy(PRESETS[name]['config'])
    except KeyError:
        raise ConfigInvalid(f'неизвестный пресет {name!r}; см. katolab presets') from None
    config.setdefault('schema_version', '1')
    config['seed'] = 0 if seed is None else seed
    config.setdefault('output', None)
    return config
