import numpy as np
import pytest

from dmol.forward import solve_forward
from dmol.problems import crack_problem, star5_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def star5_small():
    return star5_problem(M=16, order=1)


@pytest.fixture(scope="session")
def star5_small_solution(star5_small):
    return solve_forward(star5_small)


@pytest.fixture(scope="session")
def crack_small():
    return crack_problem(M=32, order=1)


def random_spd_tensor(rng, low=0.5):
    """Six coefficients of a random SPD 3x3 matrix with eigenvalues >= low."""
    from dmol.material import AnisoTensor

    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    m = q @ np.diag(rng.uniform(low, 5.0, 3)) @ q.T
    return AnisoTensor.from_matrix(m)


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
