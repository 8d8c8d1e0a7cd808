"""Tests for assembly module."""

import numpy as np
import pandas as pd
import pytest
from src.bakhvalov_fem.analysis.error_norms import energy_error
from src.bakhvalov_fem.discretisation.assembly import (
    QuadratureError,
    assemble,
    element_matrix,
    gauss_rule,
)
from src.bakhvalov_fem.discretisation.femspace import (
    FemSpace,
    GridFunction,
    interpolate,
)
from src.bakhvalov_fem.discretisation.linsolve import solve
from src.bakhvalov_fem.discretisation.mesh import build_mesh
from src.bakhvalov_fem.discretisation.problem import (
    ExactSolution,
    ProblemSpec,
    manufactured_problem,
)
from tests.discretisation.test_fixtures import uniform_mesh

pytest_plugins = ["tests.discretisation.test_fixtures"]


def _constant_problem(eps1, eps2, b, c):
    """Problem with constant coefficients and zero load."""
    return ProblemSpec(
        eps1=eps1,
        eps2=eps2,
        b=lambda x: b * np.ones_like(x),
        db=lambda x: np.zeros_like(x),
        c=lambda x: c * np.ones_like(x),
        f=lambda x, y: np.zeros(np.broadcast(x, y).shape),
        lam=max(b, 1.0),
        beta=max(c, 1.0),
        gamma=max(c, 1.0),
        b_star=max(b, 1.0),
    )


def test_gauss_rule_low_orders():
    """Test the one- and two-point rules."""
    rule = gauss_rule(1)
    assert rule.points.tolist() == [0.5] and rule.weights.tolist() == [1.0]
    rule = gauss_rule(2)
    offset = 1.0 / (2.0 * np.sqrt(3.0))
    assert np.allclose(rule.points, [0.5 - offset, 0.5 + offset], atol=1e-15)
    assert np.allclose(rule.weights, [0.5, 0.5], atol=1e-15)
    assert np.dot(rule.weights, rule.points**3) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("q", [1, 3, 5, 8, 12, 20])
def test_gauss_rule_exactness(q):
    """Test weights sum to one and x^(2q-1) is integrated exactly."""
    rule = gauss_rule(q)
    assert rule.order == q
    assert abs(rule.weights.sum() - 1.0) <= 1e-15 * q
    exact = 1.0 / (2 * q)
    assert np.dot(rule.weights, rule.points ** (2 * q - 1)) == pytest.approx(
        exact, rel=1e-14
    )


@pytest.mark.parametrize("q", [0, 21, -3])
def test_gauss_rule_out_of_range(q):
    """Test orders outside [1, 20] are rejected."""
    with pytest.raises(QuadratureError):
        gauss_rule(q)


def test_element_matrix_diffusion():
    """Test the unit Q_1 element diffusion matrix."""
    space = FemSpace(uniform_mesh(1), 1)
    problem = _constant_problem(eps1=1.0, eps2=0.0, b=1.0, c=0.0)
    E = element_matrix(space, problem, gauss_rule(3), 0, 0)
    expected = np.array(
        [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ]
    ) / 6.0
    assert np.allclose(E, expected, atol=1e-15)


def test_element_matrix_mass():
    """Test pure reaction gives the Q_1 mass matrix."""
    space = FemSpace(uniform_mesh(4), 1)
    problem = _constant_problem(eps1=0.0, eps2=0.0, b=0.0, c=1.0)
    E = element_matrix(space, problem, gauss_rule(2), 1, 2)
    area = 1.0 / 16.0
    assert np.allclose(E, E.T, atol=1e-16)
    assert E.sum() == pytest.approx(area, rel=1e-14)
    assert np.allclose(E.sum(axis=1), area / 4.0, rtol=1e-14)
    assert E[0, 0] == pytest.approx(area / 9.0, rel=1e-14)


def test_element_matrix_convection_row_sums():
    """Test convection rows of a constant b sum to zero."""
    space = FemSpace(uniform_mesh(4), 2)
    problem = _constant_problem(eps1=0.0, eps2=1.0, b=1.0, c=0.0)
    E = element_matrix(space, problem, gauss_rule(4), 0, 3)
    # test: b u_x of a constant vanishes
    assert np.allclose(E.sum(axis=1), 0.0, atol=1e-15)


def test_assemble_rejects_low_order(graded_space, problem):
    """Test assembly refuses rules with fewer than k + 1 points."""
    with pytest.raises(QuadratureError):
        assemble(graded_space, problem, gauss_rule(2))


def test_assemble_structure(problem):
    """Test sparsity pattern, dimensions and determinism."""
    space = FemSpace(build_mesh(problem.mesh_params(8, tau=3.0)), 2)
    first = assemble(space, problem, gauss_rule(4))
    second = assemble(space, problem, gauss_rule(4))
    n = len(space.interior_dofs)
    assert first.matrix.shape == (n, n) and first.rhs.shape == (n,)
    # test: bit-identical reruns
    assert np.array_equal(first.matrix.indptr, second.matrix.indptr)
    assert np.array_equal(first.matrix.indices, second.matrix.indices)
    assert np.array_equal(first.matrix.data, second.matrix.data)
    assert np.array_equal(first.rhs, second.rhs)

    pattern = first.matrix.copy()
    pattern.data[:] = 1.0
    assert (pattern - pattern.T).nnz == 0

    coo = first.matrix.tocoo()
    rows = space.interior_dofs[coo.row]
    cols = space.interior_dofs[coo.col]
    n_axis = space.n_axis
    assert np.all(np.abs(rows % n_axis - cols % n_axis) <= space.k)
    assert np.all(np.abs(rows // n_axis - cols // n_axis) <= space.k)
    # test: the convection term makes the matrix nonsymmetric
    assert abs(first.matrix - first.matrix.T).max() > 0


def test_coordinate_dump(problem, tmp_path):
    """Test the coordinate text dump has one line per stored entry."""
    space = FemSpace(build_mesh(problem.mesh_params(8, tau=2.0)), 1)
    system = assemble(space, problem, gauss_rule(3))
    path = tmp_path / "matrix.txt"
    system.to_coordinate_text(str(path))
    df = pd.read_csv(path, sep=" ", header=None, names=["row", "col", "value"])
    assert len(df) == system.matrix.nnz
    assert set(df["row"]) <= set(space.interior_dofs.tolist())


def test_coercivity(rng):
    """Test a(v, v) >= 0.99 min(1, gamma) ||v||_E^2 for random v."""
    problem = manufactured_problem(1e-6, 1e-4)
    space = FemSpace(build_mesh(problem.mesh_params(16, tau=2.0)), 1)
    system = assemble(space, problem, gauss_rule(3))
    quad = gauss_rule(4)
    for _ in range(100):
        v = rng.standard_normal(len(space.interior_dofs))
        a_vv = v @ (system.matrix @ v)
        gf = GridFunction(space, system.to_global(v))
        e_energy, _, _ = energy_error(gf, ExactSolution.zero(), quad, problem.eps1)
        assert a_vv >= 0.99 * min(1.0, problem.gamma) * e_energy**2


@pytest.mark.parametrize("k", [2, 3])
def test_galerkin_exactness(k):
    """Test a Q_k exact solution is recovered by the discrete solve."""
    eps1, eps2 = 1e-2, 1.0

    def u(x, y):
        return x * (1 - x) * y * (1 - y)

    def f(x, y):
        lap = -2 * y * (1 - y) - 2 * x * (1 - x)
        u_x = (1 - 2 * x) * y * (1 - y)
        return -eps1 * lap + eps2 * (2 - x) * u_x + u(x, y)

    problem = ProblemSpec(
        eps1=eps1,
        eps2=eps2,
        b=lambda x: 2 - x,
        db=lambda x: -np.ones_like(x),
        c=lambda x: np.ones_like(x),
        f=f,
        lam=1.0,
        beta=1.0,
        gamma=1.0,
        b_star=2.0,
    )
    space = FemSpace(uniform_mesh(8), k)
    coeffs, _ = solve(assemble(space, problem, gauss_rule(k + 2)))
    assert np.max(np.abs(coeffs - interpolate(space, u).coeffs)) < 1e-10
