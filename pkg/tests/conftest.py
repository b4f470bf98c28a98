import pytest

import common
from spacetime_models import ModelSpec, build_model


@pytest.fixture(autouse=True)
def small_batches(monkeypatch):
    monkeypatch.setitem(common.DEFAULTS, 'mc_batches', 8)


@pytest.fixture(scope='session')
def minkowski():
    return build_model(ModelSpec('minkowski', 2))


@pytest.fixture(scope='session')
def minkowski3():
    return build_model(ModelSpec('minkowski', 3))


@pytest.fixture(scope='session')
def weighted():
    return build_model(ModelSpec('weighted_minkowski', 2, {'eps': 0.5}))


@pytest.fixture(scope='session')
def bogoslovsky():
    return build_model(ModelSpec('bogoslovsky', 2, {'b': 0.1}))


@pytest.fixture(scope='session')
def de_sitter():
    return build_model(ModelSpec('de_sitter_2d', 2))
