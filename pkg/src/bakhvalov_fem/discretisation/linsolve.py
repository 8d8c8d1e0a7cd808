"""Direct and preconditioned iterative solvers for the assembled system."""

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from src.bakhvalov_fem.discretisation.assembly import SparseSystem

SOLVER_METHODS = ("lu", "gmres")
ZERO_PIVOT = 1e-300


class SingularSystemError(ArithmeticError):
    """Raised when the factorisation meets a zero pivot."""


class ConvergenceError(RuntimeError):
    """Raised when the requested residual is not reached.

    Attributes
    ----------
    residual : float
        Relative residual of the last iterate.

    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    """Solver choice and stopping parameters.

    Attributes
    ----------
    method : str
        ``"lu"`` for sparse LU with iterative refinement, ``"gmres"`` for
        restarted GMRES preconditioned by incomplete LU.
    tol : float
        Target relative residual ``||A x - b|| / ||b||``.
    restart, maxiter : int
        GMRES restart length and iteration cap.
    max_refinements : int
        Refinement sweeps allowed after the LU solve.
    ilu_drop_tol, ilu_fill_factor : float
        Incomplete LU parameters.

    """

    method: str = "lu"
    tol: float = 1e-10
    restart: int = 50
    maxiter: int = 2000
    max_refinements: int = 3
    ilu_drop_tol: float = 1e-5
    ilu_fill_factor: float = 20.0

    def __post_init__(self):
        if self.method not in SOLVER_METHODS:
            raise ValueError(
                f"solver must be one of {SOLVER_METHODS}, got {self.method!r}"
            )
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class SolveReport:
    """Summary of one solve.

    ``iterations`` is 0 for the direct path; ``refinements`` is 0 for GMRES.
    """

    method: str
    iterations: int
    residual: float
    elapsed: float
    refinements: int = 0


def _relative_residual(A, x: np.ndarray, b: np.ndarray, b_norm: float) -> float:
    return float(np.linalg.norm(b - A @ x) / b_norm)


def _factorise(A):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as e:
        raise SingularSystemError(f"sparse LU failed: {e}") from e
    if np.min(np.abs(lu.U.diagonal())) < ZERO_PIVOT:
        raise SingularSystemError("sparse LU produced a zero pivot")
    return lu


def _solve_lu(A, b, b_norm, config, logger):
    lu = _factorise(A)
    x = lu.solve(b)
    residual = _relative_residual(A, x, b, b_norm)
    refinements = 0
    while residual > config.tol and refinements < config.max_refinements:
        x = x + lu.solve(b - A @ x)
        residual = _relative_residual(A, x, b, b_norm)
        refinements += 1
    if refinements:
        logger.info(f"LU needed {refinements} refinement step(s)")
    if not np.isfinite(residual) or residual > config.tol:
        raise ConvergenceError("LU solve missed the tolerance", residual)
    return x, 0, residual, refinements


def _solve_gmres(A, b, b_norm, config, logger):
    try:
        ilu = spla.spilu(
            A.tocsc(),
            drop_tol=config.ilu_drop_tol,
            fill_factor=config.ilu_fill_factor,
        )
    except RuntimeError as e:
        raise SingularSystemError(f"incomplete LU failed: {e}") from e
    M = spla.LinearOperator(A.shape, ilu.solve)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x, info = spla.gmres(
        A,
        b,
        M=M,
        rtol=config.tol,
        atol=0.0,
        restart=config.restart,
        maxiter=config.maxiter,
        callback=count,
        callback_type="pr_norm",
    )
    residual = _relative_residual(A, x, b, b_norm)
    if info < 0:
        raise ConvergenceError(f"GMRES breakdown (info={info})", residual)
    if info > 0 or not np.isfinite(residual) or residual > config.tol:
        raise ConvergenceError(
            f"GMRES did not converge in {iterations} iterations", residual
        )
    logger.info(f"GMRES converged in {iterations} iterations")
    return x, iterations, residual, 0


def solve(
    system: SparseSystem,
    config: SolverConfig = SolverConfig(),
    logger: logging.Logger = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve the interior system and return the global solution.

    Parameters
    ----------
    system : SparseSystem
        Square nonempty system from ``assemble``.
    config : SolverConfig, optional
        Method and tolerance.
    logger : logging.Logger, optional
        Receives solver progress.

    Returns
    -------
    solution : numpy.ndarray
        Values on all dofs, zero on the boundary.
    report : SolveReport
        Method, iteration count, achieved residual and wall time.

    Raises
    ------
    ValueError
        For an empty or non-square system.
    SingularSystemError
        When the matrix is singular to working precision.
    ConvergenceError
        When the residual stays above ``config.tol``.

    """
    logger = logger or logging.getLogger(__name__)
    A = system.matrix
    b = np.asarray(system.rhs, dtype=float)
    if A.shape[0] == 0 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise ValueError(f"system must be square and nonempty, got {A.shape}")

    start = time.perf_counter()
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        x, iterations, residual, refinements = np.zeros_like(b), 0, 0.0, 0
        _factorise(A)
    elif config.method == "lu":
        x, iterations, residual, refinements = _solve_lu(A, b, b_norm, config, logger)
    else:
        x, iterations, residual, refinements = _solve_gmres(
            A, b, b_norm, config, logger
        )
    elapsed = time.perf_counter() - start

    report = SolveReport(
        method=config.method,
        iterations=iterations,
        residual=residual,
        elapsed=elapsed,
        refinements=refinements,
    )
    return system.to_global(x), report
