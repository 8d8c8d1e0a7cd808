"""A file sets up fixtures for discretisation tests."""

import numpy as np
import pytest
from src.bakhvalov_fem.discretisation.femspace import FemSpace
from src.bakhvalov_fem.discretisation.mesh import (
    MeshParams,
    TensorMesh,
    build_mesh,
)
from src.bakhvalov_fem.discretisation.problem import manufactured_problem

###########
# fixures #
###########


def uniform_mesh(N: int) -> TensorMesh:
    """Return the uniform N x N mesh of the unit square."""
    pts = np.linspace(0.0, 1.0, N + 1)
    return TensorMesh.from_points(pts, pts)


@pytest.fixture(scope="module")
def problem():
    """Manufactured problem inside the assumption regime.

    Returns
    -------
    ProblemSpec
        eps1 = 1e-6, eps2 = 1e-4.

    """
    return manufactured_problem(1e-6, 1e-4)


@pytest.fixture(scope="module")
def params(problem):
    """Mesh parameters for N = 16, tau = 2."""
    return problem.mesh_params(16, tau=2.0)


@pytest.fixture(scope="module")
def mesh(params):
    """Bakhvalov mesh for the default parameters."""
    return build_mesh(params)


@pytest.fixture(scope="module")
def tight_params():
    """Mesh parameters with every assumption satisfied, N = 8."""
    return MeshParams(
        N=8, tau=2.0, p=0.5, delta=0.25, mu0=1e3, mu1=1e5, eps1=1e-8
    )


@pytest.fixture(scope="module")
def graded_space():
    """Q_2 space on a graded mesh with N = 8."""
    problem = manufactured_problem(1e-6, 1e-4)
    return FemSpace(build_mesh(problem.mesh_params(8, tau=3.0)), 2)


@pytest.fixture(scope="module")
def rng():
    """Seeded generator for sampled checks."""
    return np.random.default_rng(20240221)
