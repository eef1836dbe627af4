import numpy as np
import pytest

from kising import _backend

ACCEPTANCE_LINES: list[str] = []

requires_compiled = pytest.mark.skipif(
    "compiled" not in _backend.BACKENDS, reason="compiled kernels not built"
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
