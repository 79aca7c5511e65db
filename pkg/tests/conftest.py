import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prhartree.energy import PotentialSpec  # noqa: E402
from prhartree.grid import Grid  # noqa: E402
from prhartree.ground_state import solve_q  # noqa: E402
from prhartree.minimizer import sweep  # noqa: E402

from oracles import RadialGroundState  # noqa: E402

# fractions of a* used by the existence and scaling checks
SWEEP_FRACTIONS = (0.3, 0.5, 0.7, 0.8, 0.85, 0.9, 0.93, 0.95, 0.98)
SWEEP_N, SWEEP_L = 64, 3.0

ACCEPTANCE_LINES = []
# wall-clock seconds spent building the expensive session fixtures
TIMINGS = {}


def _timed(name, fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    TIMINGS[name] = time.perf_counter() - t0
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def q96():
    """Certification ground state, 96^3 on [-24, 24)^3."""
    return _timed("q96", solve_q, Grid(96, 24.0), tol=1e-7)


@pytest.fixture(scope="session")
def q64():
    """Coarser ground state at 64^3 on [-18, 18)^3."""
    return _timed("q64", solve_q, Grid(64, 18.0), tol=1e-7)


@pytest.fixture(scope="session")
def radial():
    return RadialGroundState(16384, 320.0).solve()


@pytest.fixture(scope="session")
def harmonic():
    return PotentialSpec.single(2.0)


@pytest.fixture(scope="session")
def sweep_grid():
    return Grid(SWEEP_N, SWEEP_L)


@pytest.fixture(scope="session")
def sweep_results(q96, harmonic, sweep_grid):
    """Warm-started m=0, V=|x|^2 sweep; keyed by fraction of a*."""
    a = [f * q96.astar for f in SWEEP_FRACTIONS]
    res = _timed("sweep", sweep, a, 0.0, harmonic, sweep_grid, astar=q96.astar, tol=1e-6)
    return dict(zip(SWEEP_FRACTIONS, res))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
