import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hymflow import make_flat_torus, make_gauduchon_torus, make_split_bundle

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

# lines reported by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def torus1():
    return make_flat_torus(1, 32)


@pytest.fixture(scope="session")
def torus1_small():
    return make_flat_torus(1, 16)


@pytest.fixture(scope="session")
def torus2():
    return make_flat_torus(2, 16)


@pytest.fixture(scope="session")
def gauduchon():
    return make_gauduchon_torus(16, 0.1)


@pytest.fixture(scope="session")
def split11(torus1):
    return make_split_bundle(torus1, [1, -1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
