import numpy as np
import pytest

from cempc.experiments import tanh_setup, lq_setup
from cempc.model import InputConstraint

LQ_A = np.array([[0.6, 0.3], [-0.2, 0.5]])
LQ_B = np.array([[0.0], [1.0]])


@pytest.fixture(scope="session")
def tanh():
    return tanh_setup()


@pytest.fixture(scope="session")
def lq():
    return lq_setup(LQ_A, LQ_B, constraint=InputConstraint.symmetric_box(0.2))


ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
