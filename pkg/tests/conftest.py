import numpy as np
import pytest

SMALL_A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0], [0.5, 3.0], [-1.0, 0.25]])


@pytest.fixture
def small_a():
    return SMALL_A.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
