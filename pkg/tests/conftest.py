import numpy as np
import pytest

from ifsync.demos import d4, single_map, symmetric_pair


@pytest.fixture(scope="session")
def D4():
    return d4()


@pytest.fixture(scope="session")
def single():
    return single_map()


@pytest.fixture(scope="session")
def sym_pair():
    return symmetric_pair()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, one line per criterion, printed after the run
CRITERIA = {}


def record(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
