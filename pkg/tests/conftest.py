import numpy as np
import pytest

from kuratowski.manifold import ManifoldSpec

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def flat():
    return ManifoldSpec("flat_torus")


@pytest.fixture(scope="session")
def sphere():
    return ManifoldSpec("sphere")


@pytest.fixture(scope="session")
def conformal():
    return ManifoldSpec("conformal_torus", amplitude=0.1, frequency=1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
