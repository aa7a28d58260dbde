import numpy as np
import pytest

from tethersim import dynamics
from tethersim.config import ScenarioConfig
from tethersim.simulation import equilibrium_state


@pytest.fixture(scope="session")
def params():
    return dynamics.SystemParams.default()


@pytest.fixture(scope="session")
def env():
    return dynamics.Environment()


@pytest.fixture(scope="session")
def hover(params, env):
    """Symmetric taut hover with the payload at (0, 0, 0.5)."""
    x, ugvs = equilibrium_state(params, env, [0.0, 0.0, 0.5])
    return x, ugvs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def open_loop_config(**sections):
    data = {"mpc": {"enabled": False}}
    data.update(sections)
    return ScenarioConfig.model_validate(data)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
