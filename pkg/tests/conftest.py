import numpy as np
import pytest

from lageom.bundle import Geometry, GeometrySpec, random_polynomial_geometry
from lageom.dconnection import build_connection

FLAT22 = dict(g=[[1, 0], [0, 1]], h=[[1, 0], [0, 1]], N=[[0, 0], [0, 0]])

# a 2+2 geometry with non-integrable N and y-dependent metrics
NH22 = dict(
    g=[["1.5+0.2*x1*y1", "0.1*y2"], ["0.1*y2", "1.2+0.1*x2*x2"]],
    h=[["1.3+0.1*y1*y1", "0.05*x1"], ["0.05*x1", "1.1+0.2*x2*y2"]],
    N=[["0.3*y1*x2+0.1*y2", "0.2*x1*y1"], ["0.1*y2*y2", "0.25*x1+0.1*y1*x2"]],
)


def fd_grad(f, u, h=1e-5):
    """Central differences of an array-valued f; derivative axis last."""
    u = np.asarray(u, dtype=float)
    cols = []
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = h
        cols.append((np.asarray(f(u + e)) - np.asarray(f(u - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture
def flat22():
    return Geometry(GeometrySpec(2, 2, **FLAT22))


@pytest.fixture
def nh22():
    return Geometry(GeometrySpec(2, 2, **NH22))


@pytest.fixture
def nh22_canonical(nh22):
    return build_connection(nh22, "canonical")


def random_geometry(n, m, seed):
    return Geometry(random_polynomial_geometry(n, m, seed))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
