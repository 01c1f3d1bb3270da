from __future__ import annotations

import numpy as np
import pytest

import extensions
from app import create_app
from measures import DriftMeasure, GaussianBump

ORIGIN = np.zeros(3)
E1 = np.array([1.0, 0.0, 0.0])


@pytest.fixture(autouse=True)
def single_worker():
    # по умолчанию всё в одном процессе и без дискового кэша
    extensions.set_workers(1)
    extensions.init_cache(None)
    yield
    extensions.set_workers(1)


@pytest.fixture
def app(tmp_path, monkeypatch):
    monkeypatch.delenv('KATOLAB_CACHE_DIR', raising=False)
    return create_app({
        'KATOLAB_OUTPUT_DIR': str(tmp_path / 'results'),
        'KATOLAB_WORKERS': 1,
        'KATOLAB_LOG_LEVEL': 'WARNING',
    })


@pytest.fixture
def bump_drift():
    return DriftMeasure.bump(ORIGIN, 0.5, 1.0, E1)


@pytest.fixture
def bump_functional():
    return GaussianBump(ORIGIN, 0.5, 1.0)
