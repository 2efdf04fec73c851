import itertools

import numpy as np
import pytest


def all_indices(mode_sizes):
    """Every 1-based multi-index of the grid, in C order of the dense array."""
    return np.array(list(itertools.product(*[range(1, n + 1) for n in mode_sizes])), dtype=np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
