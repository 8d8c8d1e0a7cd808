"""Gauss-Legendre quadrature and Galerkin assembly with Dirichlet elimination.

The bilinear form is ``eps1 (grad u, grad v) + (eps2 b u_x + c u, v)``.
Because b and c depend on x only, every element matrix is a sum of
Kronecker products of 1D matrices, built once per element column and row.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from src.bakhvalov_fem.discretisation.femspace import FemSpace, lagrange_basis_1d
from src.bakhvalov_fem.discretisation.problem import ProblemSpec

MAX_QUAD_ORDER = 20


class QuadratureError(ValueError):
    """Raised for an unsupported or insufficient quadrature order."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [0, 1].

    Attributes
    ----------
    points, weights : numpy.ndarray
        Abscissae and weights, weights summing to one.
    order : int
        Number of points.

    """

    points: np.ndarray
    weights: np.ndarray
    order: int


def gauss_rule(q: int) -> QuadratureRule:
    """Return the q-point Gauss-Legendre rule mapped to [0, 1].

    Raises
    ------
    QuadratureError
        Unless ``1 <= q <= 20``.

    """
    if not 1 <= q <= MAX_QUAD_ORDER:
        raise QuadratureError(
            f"quadrature order must lie in [1, {MAX_QUAD_ORDER}], got {q}"
        )
    pts, wts = leggauss(q)
    return QuadratureRule(points=0.5 * (pts + 1.0), weights=0.5 * wts, order=q)


@dataclass(frozen=True)
class SparseSystem:
    """Linear system over the interior degrees of freedom.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Stiffness matrix restricted to interior rows and columns; row m,
        column n holds ``a(theta_n, theta_m)``.
    rhs : numpy.ndarray
        Load vector ``(f, theta_m)`` on interior dofs.
    interior : numpy.ndarray
        Global index of each interior unknown, ascending.
    n_global : int
        Total number of dofs including the boundary.

    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    n_global: int

    def to_global(self, values: np.ndarray) -> np.ndarray:
        """Scatter interior values into a global vector, zero on the boundary."""
        full = np.zeros(self.n_global)
        full[self.interior] = values
        return full

    def to_coordinate_text(self, path: str) -> None:
        """Write ``row col value`` lines in global dof numbering."""
        coo = self.matrix.tocoo()
        pd.DataFrame(
            {
                "row": self.interior[coo.row],
                "col": self.interior[coo.col],
                "value": coo.data,
            }
        ).to_csv(path, sep=" ", header=False, index=False, float_format="%.17g")


def _check_order(space: FemSpace, quad: QuadratureRule) -> None:
    if quad.order < space.k + 1:
        raise QuadratureError(
            f"quadrature order {quad.order} below k + 1 = {space.k + 1}"
        )


def _axis_points(pts: np.ndarray, h: np.ndarray, quad: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape ``(N, q)``."""
    return pts[:-1, None] + h[:, None] * quad.points[None, :]


def _x_matrices(space: FemSpace, problem: ProblemSpec, quad: QuadratureRule):
    """Return ``(X1, X2)`` per x-element, each ``(N, k+1, k+1)``.

    ``X1 = eps1 K + eps2 C + R`` pairs with the y mass matrix and
    ``X2 = eps1 M`` pairs with the y stiffness matrix. Index order is
    ``[i, test, trial]``.
    """
    mesh = space.mesh
    L, dL = lagrange_basis_1d(space.k, quad.points)
    w = quad.weights
    hx = mesh.hx[:, None, None]

    xq = _axis_points(mesh.x, mesh.hx, quad)
    b = np.broadcast_to(problem.b(xq), xq.shape)
    c = np.broadcast_to(problem.c(xq), xq.shape)

    K = np.einsum("g,ag,dg->ad", w, dL, dL)[None] / hx
    M = np.einsum("g,ag,dg->ad", w, L, L)[None] * hx
    C = np.einsum("g,ig,ag,dg->iad", w, b, L, dL)
    R = np.einsum("g,ig,ag,dg->iad", w, c, L, L) * hx

    return problem.eps1 * K + problem.eps2 * C + R, problem.eps1 * M


def _y_matrices(space: FemSpace, quad: QuadratureRule):
    """Return y mass and stiffness matrices, each ``(N, k+1, k+1)``."""
    L, dL = lagrange_basis_1d(space.k, quad.points)
    w = quad.weights
    hy = space.mesh.hy[:, None, None]
    My = np.einsum("g,bg,cg->bc", w, L, L)[None] * hy
    Ky = np.einsum("g,bg,cg->bc", w, dL, dL)[None] / hy
    return My, Ky


def _row_matrices(X1, X2, My_j, Ky_j) -> np.ndarray:
    """Element matrices of one element row, shape ``(N, m, m)`` with ``m = (k+1)**2``."""
    n_el, kp = X1.shape[0], X1.shape[1]
    E = np.einsum("bc,iad->ibacd", My_j, X1) + np.einsum("bc,iad->ibacd", Ky_j, X2)
    return E.reshape(n_el, kp * kp, kp * kp)


def element_matrix(
    space: FemSpace, problem: ProblemSpec, quad: QuadratureRule, i: int, j: int
) -> np.ndarray:
    """Local matrix of element ``(i, j)`` in the ``t (k+1) + s`` ordering."""
    _check_order(space, quad)
    X1, X2 = _x_matrices(space, problem, quad)
    My, Ky = _y_matrices(space, quad)
    return _row_matrices(X1[i : i + 1], X2[i : i + 1], My[j], Ky[j])[0]


def _row_loads(
    space: FemSpace, problem: ProblemSpec, quad: QuadratureRule, j: int
) -> np.ndarray:
    """Element load vectors of one element row, shape ``(N, m)``."""
    mesh = space.mesh
    L, _ = lagrange_basis_1d(space.k, quad.points)
    w = quad.weights
    xq = _axis_points(mesh.x, mesh.hx, quad)
    yq = mesh.y[j] + mesh.hy[j] * quad.points
    F = np.broadcast_to(
        problem.f(xq[:, :, None], yq[None, None, :]), xq.shape + (quad.order,)
    )
    loads = np.einsum("igh,g,h,ag,bh->iba", F, w, w, L, L)
    loads *= (mesh.hx * mesh.hy[j])[:, None, None]
    return loads.reshape(space.N, -1)


def assemble(
    space: FemSpace,
    problem: ProblemSpec,
    quad: QuadratureRule,
    logger: logging.Logger = None,
) -> SparseSystem:
    """Assemble the Galerkin system and eliminate boundary dofs.

    Parameters
    ----------
    space : FemSpace
        Trial and test space.
    problem : ProblemSpec
        Coefficients and right-hand side.
    quad : QuadratureRule
        Rule applied in each direction, order at least k + 1.
    logger : logging.Logger, optional
        Receives a summary of the assembled system.

    Returns
    -------
    system : SparseSystem
        Interior system in CSR format. Elements are visited row by row
        and duplicates are summed in that order.

    Raises
    ------
    QuadratureError
        When the rule has fewer than k + 1 points.

    """
    logger = logger or logging.getLogger(__name__)
    _check_order(space, quad)

    X1, X2 = _x_matrices(space, problem, quad)
    My, Ky = _y_matrices(space, quad)
    cols = np.arange(space.N)

    rows, colidx, data = [], [], []
    load = np.zeros(space.dof_count)
    for j in range(space.N):
        dofs = space.element_dofs(cols, np.full(space.N, j))
        E = _row_matrices(X1, X2, My[j], Ky[j])
        rows.append(np.broadcast_to(dofs[:, :, None], E.shape).ravel())
        colidx.append(np.broadcast_to(dofs[:, None, :], E.shape).ravel())
        data.append(E.ravel())
        np.add.at(load, dofs.ravel(), _row_loads(space, problem, quad, j).ravel())

    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(colidx))),
        shape=(space.dof_count, space.dof_count),
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()

    interior = space.interior_dofs
    matrix = A[interior][:, interior].tocsr()
    matrix.sort_indices()
    logger.info(
        f"Assembled N={space.N}, k={space.k}: {len(interior)} unknowns, "
        f"{matrix.nnz} nonzeros"
    )

    return SparseSystem(
        matrix=matrix,
        rhs=load[interior],
        interior=interior,
        n_global=space.dof_count,
    )
