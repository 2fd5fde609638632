import numpy as np
import pytest

from radapt.mesh import make_cartesian


def perturbed(mesh, frac=0.1, seed=0):
    """*mesh* with free coordinates moved by up to ``frac`` times the smallest edge."""
    rng = np.random.default_rng(seed)
    h = mesh.min_edge_length()
    dx = rng.uniform(-frac * h, frac * h, mesh.x.size)
    dx[mesh.constrained] = 0.0
    return mesh.with_coords(mesh.x + dx)


def central_fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.size)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


@pytest.fixture
def q2_mesh():
    return make_cartesian(3, 3, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
