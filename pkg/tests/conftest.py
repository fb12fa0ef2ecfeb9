import numpy as np
import pytest

from rtembed import AdditiveBackend, AdditiveRefParams, ToyBackend, init_params


@pytest.fixture(scope="session")
def toy_params():
    return init_params(42)


@pytest.fixture(scope="session")
def toy_backend(toy_params):
    return ToyBackend(toy_params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def additive_backend(dim=8, mix=0.5, transition=None, seed=0, overrides=None):
    params = AdditiveRefParams(
        dim=dim,
        mix=mix,
        transition=transition,
        seed=seed,
        base_overrides=overrides or {},
    )
    return AdditiveBackend(params)
