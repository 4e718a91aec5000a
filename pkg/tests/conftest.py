import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_set(rng, size, universe=1 << 40):
    """``size`` distinct uint64 items."""
    out = np.unique(rng.integers(0, universe, size=size * 2 + 8, dtype=np.uint64))
    rng.shuffle(out)
    return out[:size]


#: One "PASS/FAIL  criterion  detail" line per acceptance check, in run order.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
