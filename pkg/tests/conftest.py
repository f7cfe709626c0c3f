import numpy as np
import pytest

from imresample.theory import chain_table, fourrooms_table

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def chain_tab():
    return chain_table()


@pytest.fixture(scope="session")
def rooms_tab():
    return fourrooms_table()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
