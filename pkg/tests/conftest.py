import numpy as np
import pytest

from latiso import Grid

# lines reported by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES = []


def random_grid(rng, rows, cols, missing=0.0):
    v = rng.standard_normal((rows, cols))
    if missing:
        v[rng.random((rows, cols)) < missing] = np.nan
    return Grid(v)


def dyadic_grid(rng, rows, cols):
    """Values k/64 with |k| < 2**12, so shifts by small integers stay exact."""
    return Grid(rng.integers(-(2**12), 2**12, size=(rows, cols)) / 64.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
