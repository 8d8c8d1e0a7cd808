"""Q_k nodal finite element space on a tensor mesh, with interpolants.

Degrees of freedom are numbered lexicographically with x fastest: the dof
at x-node ``ix`` and y-node ``iy`` is ``iy * (k N + 1) + ix``. The x-node
of element ``i`` and local index ``s`` is ``i k + s``. Within an element
the local basis index is ``t (k + 1) + s``.
"""

import json
from functools import lru_cache
from typing import Callable

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from src.bakhvalov_fem.discretisation.mesh import TensorMesh
from src.bakhvalov_fem.discretisation.problem import LAYER_KINDS, ProblemError

PI_KINDS = ("E11", "E32", "E33")


@lru_cache(maxsize=None)
def _lagrange_polys(k: int) -> tuple[tuple[Polynomial, ...], tuple[Polynomial, ...]]:
    """Return Lagrange polynomials on equispaced nodes of [0, 1] and their derivatives."""
    nodes = np.arange(k + 1) / k
    polys = []
    for a in range(k + 1):
        others = np.delete(nodes, a)
        poly = Polynomial.fromroots(others)
        polys.append(poly / poly(nodes[a]))
    return tuple(polys), tuple(poly.deriv() for poly in polys)


def lagrange_basis_1d(k: int, xi) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the reference 1D basis.

    Parameters
    ----------
    k : int
        Polynomial degree.
    xi : array_like
        Reference coordinates in [0, 1].

    Returns
    -------
    values, derivatives : numpy.ndarray
        Arrays of shape ``(k + 1,) + xi.shape``.

    """
    xi = np.asarray(xi, dtype=float)
    polys, ders = _lagrange_polys(k)
    return (
        np.stack([poly(xi) for poly in polys]),
        np.stack([der(xi) for der in ders]),
    )


class FemSpace:
    """Continuous piecewise Q_k space over a tensor mesh.

    Parameters
    ----------
    mesh : TensorMesh
        Underlying grid.
    k : int
        Polynomial degree in each variable, at least 1.

    Attributes
    ----------
    nodes_x, nodes_y : numpy.ndarray
        The ``k N + 1`` nodal coordinates per axis.
    n_axis : int
        Nodes per axis.
    dof_count : int
        ``(k N + 1) ** 2``.
    boundary_mask : numpy.ndarray
        True for dofs on the boundary of the unit square.
    interior_dofs, boundary_dofs : numpy.ndarray
        Global indices, ascending.

    """

    def __init__(self, mesh: TensorMesh, k: int):
        if k < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {k}")
        self.mesh = mesh
        self.k = k
        self.N = mesh.N
        self.n_axis = k * self.N + 1
        self.dof_count = self.n_axis**2
        self.nodes_x = self._axis_nodes(mesh.x, mesh.hx)
        self.nodes_y = self._axis_nodes(mesh.y, mesh.hy)

        ix, iy = np.meshgrid(np.arange(self.n_axis), np.arange(self.n_axis))
        on_edge = (
            (ix == 0) | (ix == self.n_axis - 1) | (iy == 0) | (iy == self.n_axis - 1)
        )
        self.boundary_mask = on_edge.ravel()
        self.interior_dofs = np.flatnonzero(~self.boundary_mask)
        self.boundary_dofs = np.flatnonzero(self.boundary_mask)

    def _axis_nodes(self, pts: np.ndarray, h: np.ndarray) -> np.ndarray:
        offsets = np.arange(self.k) / self.k
        nodes = (pts[:-1, None] + offsets[None, :] * h[:, None]).ravel()
        return np.append(nodes, pts[-1])

    def dof(self, ix, iy):
        """Global dof index of x-node ``ix`` and y-node ``iy``."""
        return np.asarray(iy) * self.n_axis + np.asarray(ix)

    def element_dofs(self, i, j) -> np.ndarray:
        """Global dofs of elements ``(i, j)``, shape ``(..., (k+1)**2)``.

        The last axis follows the local ordering ``t (k + 1) + s``.

        """
        i = np.asarray(i)[..., None, None]
        j = np.asarray(j)[..., None, None]
        s = np.arange(self.k + 1)[None, :]
        t = np.arange(self.k + 1)[:, None]
        dofs = self.dof(i * self.k + s, j * self.k + t)
        return dofs.reshape(dofs.shape[:-2] + ((self.k + 1) ** 2,))

    def locate(self, x, y):
        """Return owning element indices and reference coordinates.

        Points on a mesh line belong to the element with the larger index;
        points on x = 1 or y = 1 belong to the last element.

        Raises
        ------
        ValueError
            For points outside the unit square.

        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)) or np.any(
            np.isnan(x) | np.isnan(y)
        ):
            raise ValueError("evaluation point outside [0, 1]^2")
        i = np.clip(np.searchsorted(self.mesh.x, x, side="right") - 1, 0, self.N - 1)
        j = np.clip(np.searchsorted(self.mesh.y, y, side="right") - 1, 0, self.N - 1)
        xi = (x - self.mesh.x[i]) / self.mesh.hx[i]
        eta = (y - self.mesh.y[j]) / self.mesh.hy[j]
        return i, j, xi, eta

    def zeros(self) -> "GridFunction":
        """Return the zero function."""
        return GridFunction(self, np.zeros(self.dof_count))


class GridFunction:
    """Coefficient vector over the nodal basis of a FemSpace.

    Parameters
    ----------
    space : FemSpace
        Owning space.
    coeffs : numpy.ndarray
        Nodal values in the space's dof order.

    """

    def __init__(self, space: FemSpace, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dof_count,):
            raise ValueError(
                f"expected {space.dof_count} coefficients, got {coeffs.shape}"
            )
        self.space = space
        self.coeffs = coeffs

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.space, self.coeffs - other.coeffs)

    def eval(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evaluate the function and its gradient.

        Parameters
        ----------
        x, y : float or array_like
            Points in the unit square, broadcast together.

        Returns
        -------
        value, dx, dy : numpy.ndarray
            Value and first partials; derivatives on mesh lines are taken
            from the owning element.

        Raises
        ------
        ValueError
            For points outside the unit square.

        """
        space = self.space
        x, y = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        )
        shape = x.shape
        i, j, xi, eta = space.locate(x.ravel(), y.ravel())

        lx, dlx = lagrange_basis_1d(space.k, xi)
        ly, dly = lagrange_basis_1d(space.k, eta)
        kp = space.k + 1
        local = self.coeffs[space.element_dofs(i, j)].reshape(-1, kp, kp)

        value = np.einsum("pts,sp,tp->p", local, lx, ly)
        dx = np.einsum("pts,sp,tp->p", local, dlx, ly) / space.mesh.hx[i]
        dy = np.einsum("pts,sp,tp->p", local, lx, dly) / space.mesh.hy[j]

        return value.reshape(shape), dx.reshape(shape), dy.reshape(shape)

    def nodal(self) -> np.ndarray:
        """Coefficients as a ``(n_axis, n_axis)`` array indexed ``[iy, ix]``."""
        n = self.space.n_axis
        return self.coeffs.reshape(n, n)

    def to_csv(self, path: str) -> None:
        """Dump nodal values to ``<path>.csv`` with a JSON header ``<path>.json``."""
        space = self.space
        X, Y = np.meshgrid(space.nodes_x, space.nodes_y)
        pd.DataFrame(
            {
                "dof": np.arange(space.dof_count),
                "x": X.ravel(),
                "y": Y.ravel(),
                "value": self.coeffs,
            }
        ).to_csv(f"{path}.csv", index=False, float_format="%.17g")
        with open(f"{path}.json", "w") as f:
            json.dump(
                {"N": space.N, "k": space.k, "ordering": "lexicographic, x fastest"},
                f,
            )


def interpolate(space: FemSpace, v: Callable) -> GridFunction:
    """Lagrange interpolant of ``v``, which must accept arrays ``(x, y)``."""
    X, Y = np.meshgrid(space.nodes_x, space.nodes_y)
    values = np.broadcast_to(v(X, Y), X.shape)
    return GridFunction(space, np.array(values, dtype=float).ravel())


def _column_nodes(space: FemSpace) -> np.ndarray:
    """x-node indices ``x_{3N/4}^s``, ``s = 1..k``, the column P acts on."""
    i0 = 3 * space.N // 4
    return i0 * space.k + np.arange(1, space.k + 1)


def project_column(source: Callable, space: FemSpace) -> GridFunction:
    """Place nodal values of ``source`` on the transition column.

    Only dofs whose x-node lies in ``(x_{3N/4}, x_{3N/4+1}]``, at every
    y-node, receive values; all other coefficients are zero.

    """
    ix = _column_nodes(space)
    iy = np.arange(space.n_axis)
    IX, IY = np.meshgrid(ix, iy)
    coeffs = np.zeros(space.dof_count)
    coeffs[space.dof(IX, IY).ravel()] = np.broadcast_to(
        source(space.nodes_x[IX], space.nodes_y[IY]), IX.shape
    ).ravel()
    return GridFunction(space, coeffs)


def corner_correction(source: Callable, space: FemSpace) -> GridFunction:
    """Restrict the transition-column values to the rows y = 0 and y = 1."""
    ix = _column_nodes(space)
    iy = np.array([0, space.n_axis - 1])
    IX, IY = np.meshgrid(ix, iy)
    coeffs = np.zeros(space.dof_count)
    coeffs[space.dof(IX, IY).ravel()] = np.broadcast_to(
        source(space.nodes_x[IX], space.nodes_y[IY]), IX.shape
    ).ravel()
    return GridFunction(space, coeffs)


def corrected_interpolant(
    decomp: list[tuple[str, Callable]], space: FemSpace
) -> GridFunction:
    """Interpolant with the transition-column correction on x = 1 layers.

    Components of kind E11, E32 and E33 are mapped by
    ``interpolate - project_column + corner_correction``; every other
    component is interpolated.

    Parameters
    ----------
    decomp : list of (str, callable)
        Solution components labelled by kind.
    space : FemSpace
        Target space.

    Returns
    -------
    gf : GridFunction
        Sum of the mapped components.

    Raises
    ------
    ProblemError
        For an unknown component kind.

    """
    total = space.zeros()
    for kind, fn in decomp:
        if kind not in LAYER_KINDS:
            raise ProblemError(f"unknown component kind {kind!r}")
        total = total + interpolate(space, fn)
        if kind in PI_KINDS:
            total = total - project_column(fn, space) + corner_correction(fn, space)
    return total
