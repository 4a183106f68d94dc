import numpy as np
import pytest

from rombuckle import assembly as A
from rombuckle import constitutive as C
from rombuckle import mesh as M


def model(kind, E=1e6, nu=0.3):
    return C.MaterialModel.from_young_poisson(kind, E, nu)


def beam2d_dirichlet(nx=40, ny=4):
    m = M.build_beam_2d(1.0, 0.1, nx, ny)
    bcs = A.BoundaryConditions((A.DirichletBC(M.DIRICHLET_LEFT),
                                A.DirichletBC(M.DIRICHLET_RIGHT, rate=(-1.0, 0.0))))
    return m, bcs


def fd_jacobian(fun, x, h=1e-6):
    """Central differences of a vector function, column by column."""
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.column_stack(cols)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def small_beam():
    return beam2d_dirichlet(8, 2)


# -- acceptance reporting ------------------------------------------------

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
