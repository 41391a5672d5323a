import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("wfsim", deadline=None)
settings.load_profile("wfsim")

from wfsim.engine import derive_stream

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def stream():
    return derive_stream(12345, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
