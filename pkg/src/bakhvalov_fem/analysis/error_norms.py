"""Error norms against exact solutions and the single-case solve pipeline."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from src.bakhvalov_fem.discretisation.assembly import (
    QuadratureError,
    QuadratureRule,
    assemble,
    gauss_rule,
)
from src.bakhvalov_fem.discretisation.femspace import (
    FemSpace,
    GridFunction,
    interpolate,
    lagrange_basis_1d,
)
from src.bakhvalov_fem.discretisation.linsolve import (
    ConvergenceError,
    SingularSystemError,
    SolveReport,
    SolverConfig,
    solve,
)
from src.bakhvalov_fem.discretisation.mesh import MeshError, build_mesh
from src.bakhvalov_fem.discretisation.problem import (
    ExactSolution,
    ProblemError,
    ProblemSpec,
)


class CaseError(RuntimeError):
    """Raised when one (N, k, eps1, eps2) case cannot be completed."""


@dataclass(frozen=True)
class ErrorReport:
    """Errors and solver statistics of one case.

    Attributes
    ----------
    N, k : int
        Elements per direction and polynomial degree.
    eps1, eps2, tau, p, delta : float
        Problem and mesh parameters.
    e_energy, e_l2, e_h1 : float
        Energy norm, L2 norm and H1 seminorm of ``u - u^N``.
    rate_energy : float or None
        Rate towards the next N of the same series, set by the study.
    solve : SolveReport
        Linear solver summary.
    elapsed : float
        Wall time of the whole pipeline in seconds.
    warnings : tuple of dict
        Mesh assumption records.

    """

    N: int
    k: int
    eps1: float
    eps2: float
    tau: float
    p: float
    delta: float
    e_energy: float
    e_l2: float
    e_h1: float
    solve: SolveReport
    rate_energy: float = None
    elapsed: float = 0.0
    warnings: tuple = field(default=())


def _row_values(gf: GridFunction, j: int, quad: QuadratureRule):
    """Value and gradient of gf at the quadrature points of element row j.

    Arrays have shape ``(N, q, q)`` indexed ``[i, gx, gy]``.
    """
    space = gf.space
    mesh = space.mesh
    kp = space.k + 1
    L, dL = lagrange_basis_1d(space.k, quad.points)
    dofs = space.element_dofs(np.arange(space.N), np.full(space.N, j))
    local = gf.coeffs[dofs].reshape(space.N, kp, kp)

    value = np.einsum("its,sg,th->igh", local, L, L)
    dx = np.einsum("its,sg,th->igh", local, dL, L) / mesh.hx[:, None, None]
    dy = np.einsum("its,sg,th->igh", local, L, dL) / mesh.hy[j]
    return value, dx, dy


def energy_error(
    gf: GridFunction, exact: ExactSolution, quad: QuadratureRule, eps1: float
) -> tuple[float, float, float]:
    """Measure ``u - gf`` in the energy norm, the L2 norm and the H1 seminorm.

    Parameters
    ----------
    gf : GridFunction
        Discrete function.
    exact : ExactSolution
        Reference function and its gradient.
    quad : QuadratureRule
        Rule per direction; order k + 3 resolves layer integrands.
    eps1 : float
        Weight of the seminorm in the energy norm.

    Returns
    -------
    e_energy, e_l2, e_h1 : float
        With ``e_energy**2 == eps1 * e_h1**2 + e_l2**2``.

    Raises
    ------
    QuadratureError
        When the rule has fewer than k + 1 points.

    """
    space = gf.space
    if quad.order < space.k + 1:
        raise QuadratureError(
            f"error quadrature order {quad.order} below k + 1 = {space.k + 1}"
        )
    mesh = space.mesh
    xq = mesh.x[:-1, None] + mesh.hx[:, None] * quad.points[None, :]
    w2 = np.outer(quad.weights, quad.weights)[None]

    l2_sq = 0.0
    h1_sq = 0.0
    for j in range(space.N):
        yq = mesh.y[j] + mesh.hy[j] * quad.points
        X, Y = xq[:, :, None], yq[None, None, :]
        value, dx, dy = _row_values(gf, j, quad)
        area = (mesh.hx * mesh.hy[j])[:, None, None]
        err = exact.u(X, Y) - value
        gx = exact.u_x(X, Y) - dx
        gy = exact.u_y(X, Y) - dy
        l2_sq += float(np.sum(area * w2 * err**2))
        h1_sq += float(np.sum(area * w2 * (gx**2 + gy**2)))

    e_l2 = np.sqrt(l2_sq)
    e_h1 = np.sqrt(h1_sq)
    return float(np.sqrt(eps1 * h1_sq + l2_sq)), float(e_l2), float(e_h1)


def template_solution(fn) -> ExactSolution:
    """Wrap a layer template as an ExactSolution."""
    return ExactSolution(
        u=fn,
        u_x=fn.dx,
        u_y=fn.dy,
        u_xx=lambda x, y: fn.derivative(x, y, 2, 0),
        u_yy=lambda x, y: fn.derivative(x, y, 0, 2),
    )


def interpolation_errors(
    space: FemSpace, fn: Callable, quad: QuadratureRule, eps1: float
) -> tuple[float, float, float]:
    """Return ``(energy, L2, H1)`` norms of ``fn - fn^I``.

    ``fn`` is a layer template, or anything with ``dx``, ``dy`` and
    ``derivative`` methods.
    """
    return energy_error(interpolate(space, fn), template_solution(fn), quad, eps1)


def rate(e_N: float, e_2N: float, ratio: float = 2.0) -> float:
    """Observed convergence rate ``ln(e_N / e_2N) / ln(ratio)``.

    Raises
    ------
    ValueError
        For a nonpositive error or ratio <= 1.

    """
    if not (e_N > 0 and e_2N > 0):
        raise ValueError(f"errors must be positive, got {e_N}, {e_2N}")
    if not ratio > 1:
        raise ValueError(f"refinement ratio must exceed 1, got {ratio}")
    return float(np.log(e_N / e_2N) / np.log(ratio))


def run_case(
    problem: ProblemSpec,
    N: int,
    k: int,
    tau: float = None,
    p: float = 0.5,
    delta: float = 0.25,
    solver_config: SolverConfig = SolverConfig(),
    quad: int = None,
    error_quad: int = None,
    fallback: str = "relax",
    logger: logging.Logger = None,
) -> ErrorReport:
    """Run mesh, space, assembly, solve and error measurement for one case.

    Parameters
    ----------
    problem : ProblemSpec
        Problem with a known exact solution.
    N, k : int
        Elements per direction and polynomial degree.
    tau : float, optional
        Mesh parameter, defaults to k + 1.
    p, delta : float, optional
        Mesh parameters.
    solver_config : SolverConfig, optional
        Linear solver settings.
    quad, error_quad : int, optional
        Gauss points per direction for assembly (default k + 2) and for
        the error norms (default k + 3).
    fallback : str, optional
        Transition-point policy passed to the mesh.
    logger : logging.Logger, optional
        Pipeline logger.

    Returns
    -------
    report : ErrorReport
        Errors, solver summary and mesh warnings.

    Raises
    ------
    CaseError
        Wrapping any failure, with the case parameters in the message.

    """
    logger = logger or logging.getLogger(__name__)
    tau = float(k + 1) if tau is None else tau
    context = f"N={N}, k={k}, eps1={problem.eps1:g}, eps2={problem.eps2:g}"

    start = time.perf_counter()
    try:
        if problem.exact is None:
            raise ProblemError(f"problem {problem.name!r} has no exact solution")
        problem.validate()
        params = problem.mesh_params(N, tau, p, delta, fallback=fallback)
        mesh = build_mesh(params, logger)
        space = FemSpace(mesh, k)
        system = assemble(space, problem, gauss_rule(quad or k + 2), logger)
        coeffs, report = solve(system, solver_config, logger)
        e_energy, e_l2, e_h1 = energy_error(
            GridFunction(space, coeffs),
            problem.exact,
            gauss_rule(error_quad or k + 3),
            problem.eps1,
        )
    except (
        MeshError,
        ProblemError,
        QuadratureError,
        SingularSystemError,
        ConvergenceError,
        ValueError,
    ) as e:
        logger.error(f"Case {context} failed: {e}")
        raise CaseError(f"{context}: {e}") from e
    elapsed = time.perf_counter() - start

    if not all(np.isfinite([e_energy, e_l2, e_h1])):
        raise CaseError(f"{context}: non-finite error norm")
    logger.info(f"Case {context}: e_energy={e_energy:.3e}")

    return ErrorReport(
        N=N,
        k=k,
        eps1=problem.eps1,
        eps2=problem.eps2,
        tau=tau,
        p=p,
        delta=delta,
        e_energy=e_energy,
        e_l2=e_l2,
        e_h1=e_h1,
        solve=report,
        elapsed=elapsed,
        warnings=mesh.warnings,
    )
