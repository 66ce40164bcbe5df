import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ruelle_kit.circle_map import CircleMap
from ruelle_kit.dc_class import make_sequence
from ruelle_kit.transfer_op import assemble_matrix

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

THETA = 1.5


@pytest.fixture(scope="session")
def doubling():
    return CircleMap.doubling()


@pytest.fixture(scope="session")
def perturbed():
    return CircleMap.perturbed(2, 0.05)


@pytest.fixture(scope="session")
def analytic():
    return make_sequence({"kind": "analytic"}, 4096)


@pytest.fixture(scope="session")
def gevrey2():
    return make_sequence({"kind": "gevrey", "sigma": 2.0}, 4096)


@pytest.fixture(scope="session")
def perturbed_matrix_64(perturbed):
    return assemble_matrix(perturbed, None, 64)


@pytest.fixture(scope="session")
def perturbed_matrix_128(perturbed):
    return assemble_matrix(perturbed, None, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
