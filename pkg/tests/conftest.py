import numpy as np
import pytest

from harrisflow.covariance import CovarianceSpec
from harrisflow.drift import DriftSpec


def pytest_configure(config):
    # collected by the acceptance tests, printed after the run so the
    # scoreboard survives output capture
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance scoreboard")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def gauss():
    return CovarianceSpec(kind="gaussian")


@pytest.fixture
def exp1():
    return CovarianceSpec(kind="exponential_alpha", alpha=1.0)


@pytest.fixture
def indicator():
    return CovarianceSpec(kind="indicator", c_phi=1.0)


@pytest.fixture
def zero_drift():
    return DriftSpec(kind="zero")


@pytest.fixture
def contracting():
    return DriftSpec(kind="affine", c0=0.0, c1=-1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
