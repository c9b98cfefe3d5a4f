import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lakevvl.grid import build_grid, constant_bathymetry, eval_bathymetry  # noqa: E402

# filled by the acceptance tests, printed once at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def grid32():
    return build_grid(32, 64)


@pytest.fixture
def flat32(grid32):
    return constant_bathymetry(grid32)


@pytest.fixture
def lake32(grid32):
    return eval_bathymetry(grid32, 2.0, 1e-2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
