import numpy as np
import pytest

from regenlab.environment import EnvironmentSpec, make_environment


@pytest.fixture
def const_spec():
    return EnvironmentSpec(dimension=2, mode="constant", drift_mean=(0.5, 0.0))


@pytest.fixture
def field_spec():
    return EnvironmentSpec(dimension=2, coefficient_bound=20.0, drift_mean=(1.0, 0.0),
                           drift_amplitude=0.4, diffusion_amplitude=0.2, master_seed=7)


@pytest.fixture
def field_env(field_spec):
    return make_environment(field_spec)


@pytest.fixture
def e1():
    return np.array([1.0, 0.0])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
