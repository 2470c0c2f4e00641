import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from frameflow.schottky import bundled_group
from frameflow.thermo import CodedSystem, critical_exponent, normalized_family

settings.register_profile("frameflow", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("frameflow")


@pytest.fixture(scope="session")
def fuchsian():
    return bundled_group("fuchsian")


@pytest.fixture(scope="session")
def kleinian():
    return bundled_group("kleinian")


def _setup(group, depth):
    system = CodedSystem.from_group(group, depth)
    delta = critical_exponent(system).delta
    return system, delta, normalized_family(system, delta, [0.0])[0]


@pytest.fixture(scope="session")
def fuchsian_setup(fuchsian):
    return _setup(fuchsian, 4)


@pytest.fixture(scope="session")
def kleinian_setup(kleinian):
    return _setup(kleinian, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
