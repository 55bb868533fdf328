import numpy as np
import pytest

from ionphoton.config import reference_configs

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def configs():
    return reference_configs()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
