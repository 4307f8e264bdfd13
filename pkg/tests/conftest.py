import numpy as np
import pytest

from polaronlab.model import DispersionSpec, FormFactorSpec, KGridSpec, ModelSpec


@pytest.fixture
def model_1d():
    """d = 1, omega = 1, gaussian g, 12 modes."""
    return ModelSpec(1, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.6, 1.0), 0.5,
                     KGridSpec(0.25, 1.5, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
