import math

import numpy as np
import pytest

# lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example1():
    A = np.array([[0.0, 1.0], [-1.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    K = np.array([[-1.0, -3.0]])
    return A, B, K


@pytest.fixture(scope="session")
def example2():
    A = np.array([[-2 / 3, -1.0, 5 / 3], [0.0, -1.0, 0.0], [1 / 3, -1.0, 2 / 3]])
    B = np.array([[1.0, -1.0], [0.0, 2.0], [-2.0, 1.0]])
    K = np.array([[0.3572, -0.4853, 1.1281], [0.3925, -0.5660, 0.4235]])
    return A, B, K


@pytest.fixture(scope="session")
def rd_config():
    from delaycert.pde import ReactionDiffusionConfig
    return ReactionDiffusionConfig(0.5, 0.5, 2 * math.pi)


def random_hurwitz(rng, n, margin=0.2):
    """Random real matrix shifted so its spectral abscissa is ``-margin``."""
    M = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(M).real) + margin
    return M - shift * np.eye(n)
