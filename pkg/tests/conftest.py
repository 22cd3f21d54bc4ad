import numpy as np
import pytest

from pknspectral import build_mesh

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def mesh40():
    return build_mesh(40, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
