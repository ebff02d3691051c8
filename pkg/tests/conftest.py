import numpy as np
import pytest

from quadham.fields import ReducedState
from quadham.grid import make_grid

ACCEPTANCE_LINES: list[str] = []


def smooth_field(grid, rng, modes=3):
    """Random combination of low-order modes that respects the grid's boundary policy."""
    out = np.zeros(grid.shape)
    mesh = grid.mesh()
    for _ in range(modes):
        term = np.full(grid.shape, rng.normal())
        for j, x in enumerate(mesh):
            a, _ = grid.extents[j]
            L = grid.lengths[j]
            k = rng.integers(1, 4)
            if grid.bc == "periodic":
                term = term * np.cos(2 * np.pi * k * (x - a) / L + rng.uniform(0, 2 * np.pi))
            else:
                term = term * np.sin(np.pi * k * (x - a) / L)
        out += term
    return out


def random_smooth_state(grid, rng):
    return ReducedState(grid, smooth_field(grid, rng), smooth_field(grid, rng))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["periodic", "dirichlet"])
def grid1d(request):
    return make_grid(1, (0.0, 1.0), 48, request.param)


@pytest.fixture(params=["periodic", "dirichlet"])
def grid2d(request):
    return make_grid(2, [(0.0, 1.0), (-1.0, 1.0)], (12, 20), request.param)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
