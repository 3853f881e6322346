import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bifurnet.network import init_network

# derandomized so that property tests cannot flake between runs
settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sigmoid_net():
    """Small untrained 1 -> 8 -> 1 network with nonzero biases."""
    net = init_network([1, 8, 1], "sigmoid", seed=3)
    r = np.random.default_rng(5)
    for b in net.biases:
        b[:] = r.normal(size=b.shape)
    return net
