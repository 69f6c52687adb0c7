import numpy as np
import pytest

from spingp.core import SpatialGrid, gaussian_potential
from spingp.solitons import SolitonData, soliton_field
from spingp.core import MatrixPotential

# three Gaussian data sets; each is a scalar profile times a constant matrix that is
# diagonalized by a real rotation, the class on which gamma is normal
CORPUS = [
    dict(amplitude=(0.0, 0.3, 0.0), width=1.0, center=0.0),
    dict(amplitude=(0.2, 0.0, -0.15), width=1.5, center=1.0),
    dict(amplitude=tuple(0.25 * np.exp(0.4j) * v for v in (1.0, 0.4, -0.6)), width=0.8, center=-2.0,
         phase_slope=0.5),
]

# generic spinor datum: (q1 - qm1) conj(q0) has a nonzero imaginary part, so gamma is not normal
GENERIC = dict(amplitude=(0.2, 0.1j, -0.15), width=1.5, center=1.0)


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid(-40.0, 40.0, 2048)


@pytest.fixture(scope="session")
def corpus(grid):
    return [gaussian_potential(grid, **c) for c in CORPUS]


def soliton_potential(grid, ks, fs, t=0.0):
    sd = SolitonData(ks, fs)
    return sd, MatrixPotential(grid, soliton_field(sd, grid.x, t))
