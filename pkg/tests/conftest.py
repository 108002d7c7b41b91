import numpy as np
import pytest

from gdelab.interactions import InteractionModel
from gdelab.state_space import FreeBasis, ZContour


@pytest.fixture
def two_level():
    basis = FreeBasis([0.0, 1.0])
    model = InteractionModel.instantaneous(np.array([[0.0, 0.1], [0.1, 0.0]]))
    return basis, model


@pytest.fixture
def two_level_contour(two_level):
    return ZContour.standard(two_level[0], n_points=50)


def exact_ground_two_level(lam=0.1):
    """Lowest eigenvalue of [[0, lam], [lam, 1]]."""
    return (1 - np.sqrt(1 + 4 * lam * lam)) / 2


CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a criterion outcome; lines are echoed in the terminal summary."""
    def record(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
        CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
