import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def test_params():
    from secinfer.ckks.params import preset
    return preset("test")


@pytest.fixture(scope="session")
def paper_params():
    from secinfer.ckks.params import preset
    return preset("paper")


@pytest.fixture(scope="session")
def test_keys(test_params):
    from secinfer.ckks.scheme import keygen
    return keygen(test_params, seed=11, rotations=(1, 2, 3, -1))


@pytest.fixture(scope="session")
def paper_client(paper_params):
    from secinfer.fhe_protocol import FheClient
    return FheClient(paper_params, seed=5)
