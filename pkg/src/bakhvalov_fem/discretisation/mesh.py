"""Bakhvalov-type tensor-product mesh and mesh-width diagnostics."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

FALLBACK_MODES = ("error", "relax")


class MeshError(ValueError):
    """Raised for invalid mesh parameters or transition-point violations."""


def compute_mu(
    eps1: float, eps2: float, b_star: float, lam: float, beta: float
) -> tuple[float, float]:
    """Compute the exponential layer rates from problem data.

    The rates are the magnitudes of the roots of
    ``-eps1 g**2 + eps2 b g + c = 0`` taken with ``b = b_star`` (for the
    root governing the layer at x = 0) and ``b = lam`` (layer at x = 1).

    Parameters
    ----------
    eps1 : float
        Diffusion parameter, strictly positive.
    eps2 : float
        Convection parameter, non-negative.
    b_star : float
        Maximum of the convection coefficient b on [0, 1].
    lam : float
        Lower bound of b on [0, 1], with ``0 < lam <= b_star``.
    beta : float
        Lower bound of the reaction coefficient c, strictly positive.

    Returns
    -------
    mu0, mu1 : tuple of float
        Layer rates at x = 0 and x = 1, with ``mu0 <= mu1``.

    Raises
    ------
    ValueError
        When any precondition on the arguments fails.

    """
    if eps1 <= 0:
        raise ValueError(f"eps1 must be positive, got {eps1}")
    if eps2 < 0:
        raise ValueError(f"eps2 must be non-negative, got {eps2}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not 0 < lam <= b_star:
        raise ValueError(
            f"need 0 < lambda <= b_star, got lambda={lam}, b_star={b_star}"
        )

    root0 = np.sqrt((eps2 * b_star) ** 2 + 4.0 * eps1 * beta)
    root1 = np.sqrt((eps2 * lam) ** 2 + 4.0 * eps1 * beta)
    # the difference form loses every digit once eps2**2 >> eps1
    mu0 = 2.0 * beta / (eps2 * b_star + root0)
    mu1 = (eps2 * lam + root1) / (2.0 * eps1)

    return float(mu0), float(mu1)


@dataclass(frozen=True)
class MeshParams:
    """Inputs of the Bakhvalov-type mesh generator.

    Parameters
    ----------
    N : int
        Elements per direction, at least 8 and divisible by 4.
    tau : float
        Grading exponent, ``tau >= 1`` (the analysis wants ``tau >= k+1``).
    p : float
        Layer-strength parameter in (0, 1).
    delta : float
        Parabolic-layer parameter, positive.
    mu0, mu1 : float
        Exponential layer rates at x = 0 and x = 1.
    eps1 : float
        Diffusion parameter in (0, 1].
    fallback : str, optional
        ``"error"`` raises on any transition point outside (0, 1/4];
        ``"relax"`` grades or flattens each side as far as the formulas
        allow and records a warning instead.

    """

    N: int
    tau: float
    p: float
    delta: float
    mu0: float
    mu1: float
    eps1: float
    fallback: str = "error"

    def __post_init__(self):
        if self.N < 8 or self.N % 4 != 0:
            raise MeshError(f"N must be >= 8 and divisible by 4, got {self.N}")
        if self.tau < 1:
            raise MeshError(f"tau must be >= 1, got {self.tau}")
        if not 0 < self.p < 1:
            raise MeshError(f"p must lie in (0, 1), got {self.p}")
        if self.delta <= 0:
            raise MeshError(f"delta must be positive, got {self.delta}")
        if self.mu0 <= 0 or self.mu1 <= 0:
            raise MeshError(
                f"layer rates must be positive, got mu0={self.mu0}, "
                f"mu1={self.mu1}"
            )
        if not 0 < self.eps1 <= 1:
            raise MeshError(f"eps1 must lie in (0, 1], got {self.eps1}")
        if self.fallback not in FALLBACK_MODES:
            raise MeshError(
                f"fallback must be one of {FALLBACK_MODES}, "
                f"got {self.fallback!r}"
            )

    @property
    def sigma_x0(self) -> float:
        """Transition point of the layer at x = 0."""
        return self.tau / (self.p * self.mu0) * np.log(self.mu0)

    @property
    def sigma_x1(self) -> float:
        """Width of the graded region at x = 1."""
        return self.tau / (self.p * self.mu1) * np.log(self.mu1)

    @property
    def sigma_y(self) -> float:
        """Width of each graded region in y."""
        return (
            self.tau / self.delta * np.sqrt(self.eps1) * -np.log(np.sqrt(self.eps1))
        )

    @property
    def mu_ok(self) -> bool:
        """Whether ``1/mu1 <= 1/mu0 <= 1/N`` holds."""
        return 1.0 / self.mu1 <= 1.0 / self.mu0 <= 1.0 / self.N

    @property
    def sigma_ok(self) -> bool:
        """Whether every transition point lies in (0, 1/4]."""
        return all(
            0 < sigma <= 0.25
            for sigma in (self.sigma_x0, self.sigma_x1, self.sigma_y)
        )


@dataclass(frozen=True)
class TensorMesh:
    """Tensor-product grid on the unit square.

    Attributes
    ----------
    x, y : numpy.ndarray
        Strictly increasing mesh points, ``N + 1`` per axis.
    hx, hy : numpy.ndarray
        Element widths, ``hx[i] = x[i+1] - x[i]``.
    warnings : tuple of dict
        Assumption-violation records collected while building.

    """

    x: np.ndarray
    y: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    warnings: tuple = field(default=())

    @classmethod
    def from_points(cls, x, y, warnings: tuple = ()) -> "TensorMesh":
        """Build a mesh from explicit point arrays.

        Parameters
        ----------
        x, y : array_like
            Mesh points on [0, 1], strictly increasing, same length.
        warnings : tuple of dict, optional
            Records to carry along.

        Returns
        -------
        mesh : TensorMesh
            Immutable mesh with widths derived from the points.

        Raises
        ------
        MeshError
            When the points do not span [0, 1] or are not increasing.

        """
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        for name, pts in (("x", x), ("y", y)):
            if pts.ndim != 1 or len(pts) < 2:
                raise MeshError(f"{name} needs at least two points")
            if pts[0] != 0.0 or pts[-1] != 1.0:
                raise MeshError(f"{name} must start at 0 and end at 1")
            if np.any(np.diff(pts) <= 0):
                raise MeshError(f"{name} points are not strictly increasing")
        if len(x) != len(y):
            raise MeshError("x and y must hold the same number of points")

        hx = np.diff(x)
        hy = np.diff(y)
        for arr in (x, y, hx, hy):
            arr.flags.writeable = False

        return cls(x=x, y=y, hx=hx, hy=hy, warnings=tuple(warnings))

    @property
    def N(self) -> int:
        """Number of elements per direction."""
        return len(self.hx)

    def to_text(self, path: str) -> None:
        """Write one two-column (index, coordinate) file per axis.

        Parameters
        ----------
        path : str
            Path stem; ``<path>_x.txt`` and ``<path>_y.txt`` are written.

        """
        for axis, pts in (("x", self.x), ("y", self.y)):
            df = pd.DataFrame({"index": np.arange(len(pts)), axis: pts})
            df.to_csv(
                f"{path}_{axis}.txt",
                sep=" ",
                header=False,
                index=False,
                float_format="%.17g",
            )

    def to_json(self, path: str) -> None:
        """Write the mesh as ``{"x": [...], "y": [...]}``."""
        with open(path, "w") as f:
            json.dump({"x": self.x.tolist(), "y": self.y.tolist()}, f)


def _graded_side(t: np.ndarray, scale: float, q: float) -> np.ndarray:
    """Evaluate ``scale * -ln(1 - 4 (1 - q) t)`` on a quarter of the grid."""
    return scale * -np.log1p(-4.0 * (1.0 - q) * t)


def _resolve_side(
    name: str, sigma: float, limit: float, fallback: str
) -> tuple[bool, str | None]:
    """Decide whether one side keeps the graded formula.

    Returns
    -------
    graded : bool
        True to use the logarithmic formula, False for a uniform quarter.
    message : str or None
        Description of the violation, None when sigma is admissible.

    """
    if 0 < sigma <= 0.25:
        return True, None

    message = f"{name} = {sigma:.6g} outside (0, 1/4]"
    if fallback == "error":
        raise MeshError(
            f"transition point {message}; mesh points would not be "
            "monotone on a Bakhvalov-type layout"
        )
    if 0 < sigma < limit:
        return True, message + "; graded formula kept"

    return False, message + "; uniform quarter used"


def _axis(
    N: int,
    sides: tuple[tuple[str, float, float, float], tuple[str, float, float, float]],
    fallback: str,
    records: list,
    logger: logging.Logger,
) -> np.ndarray:
    """Assemble one axis from its two graded sides and the uniform middle.

    Each side is ``(name, sigma, scale, q)`` where the graded points are
    ``scale * phi(t)`` with ``phi(t) = -ln(1 - 4 (1 - q) t)``.

    """
    (name0, sigma0, scale0, q0), (name1, sigma1, scale1, q1) = sides
    t = np.arange(N + 1) / N
    s = np.arange(N, -1, -1) / N  # 1 - t without cancellation
    quarter, three_quarter = N // 4, 3 * N // 4

    graded0, msg0 = _resolve_side(name0, sigma0, 1.0 - max(sigma1, 0.0), fallback)
    graded1, msg1 = _resolve_side(name1, sigma1, 1.0 - max(sigma0, 0.0), fallback)
    if not graded0:
        sigma0 = 0.25
    if not graded1:
        sigma1 = 0.25
    if graded0 and graded1 and sigma0 + sigma1 >= 1.0:
        graded0 = graded1 = False
        sigma0 = sigma1 = 0.25
        msg0 = f"{name0} + {name1} >= 1; uniform quarters used"
        msg1 = None
    for msg in (msg0, msg1):
        if msg is not None:
            records.append({"kind": "sigma", "message": msg})
            logger.warning(f"Transition point relaxed: {msg}")

    pts = np.empty(N + 1)
    if graded0:
        pts[:quarter] = _graded_side(t[:quarter], scale0, q0)
    else:
        pts[:quarter] = t[:quarter]
    pts[quarter:three_quarter] = sigma0 + 2.0 * (
        t[quarter:three_quarter] - 0.25
    ) * (1.0 - sigma0 - sigma1)
    if graded1:
        pts[three_quarter + 1 :] = 1.0 - _graded_side(
            s[three_quarter + 1 :], scale1, q1
        )
    else:
        pts[three_quarter + 1 :] = 1.0 - s[three_quarter + 1 :]

    # transition points and ends are pinned exactly
    pts[quarter] = sigma0
    pts[three_quarter] = 1.0 - sigma1
    pts[0] = 0.0
    pts[N] = 1.0

    return pts


def build_mesh(params: MeshParams, logger: logging.Logger = None) -> TensorMesh:
    """Construct the Bakhvalov-type mesh.

    The x-axis is graded on ``[0, sigma_x0]`` and ``[1 - sigma_x1, 1]``,
    the y-axis on ``[0, sigma_y]`` and ``[1 - sigma_y, 1]``, and both are
    uniform in between.

    Parameters
    ----------
    params : MeshParams
        Generator inputs.
    logger : logging.Logger, optional
        Receives assumption-violation warnings.

    Returns
    -------
    mesh : TensorMesh
        The graded grid, with warning records for every violated
        assumption.

    Raises
    ------
    MeshError
        When a transition point falls outside (0, 1/4] and
        ``params.fallback == "error"``.

    """
    logger = logger or logging.getLogger(__name__)
    records = []

    if not params.mu_ok:
        msg = (
            f"mu assumption 1/mu1 <= 1/mu0 <= 1/N violated "
            f"(mu0={params.mu0:.6g}, mu1={params.mu1:.6g}, N={params.N})"
        )
        records.append({"kind": "mu", "message": msg})
        logger.warning(msg)

    N = params.N
    sqrt_eps = np.sqrt(params.eps1)
    x = _axis(
        N,
        (
            (
                "sigma_x0",
                params.sigma_x0,
                params.tau / (params.p * params.mu0),
                1.0 / params.mu0,
            ),
            (
                "sigma_x1",
                params.sigma_x1,
                params.tau / (params.p * params.mu1),
                1.0 / params.mu1,
            ),
        ),
        params.fallback,
        records,
        logger,
    )
    y_side = params.tau / params.delta * sqrt_eps
    y = _axis(
        N,
        (
            ("sigma_y", params.sigma_y, y_side, sqrt_eps),
            ("sigma_y", params.sigma_y, y_side, sqrt_eps),
        ),
        params.fallback,
        records,
        logger,
    )

    return TensorMesh.from_points(x, y, warnings=tuple(records))


@dataclass(frozen=True)
class AxisReport:
    """Mesh-width diagnostics along one axis.

    Attributes
    ----------
    uniform_bounds_ok : bool
        ``1/N <= h_i <= 2/N`` on the uniform region, checked exactly.
    graded_monotone_ok : bool
        Widths increase towards the first transition point and decrease
        after the second.
    transition_bounds : dict
        Lower and upper ratios for the two transition elements, each of
        which should lie in [1, inf) when the bound holds.
    decay_ratio_left, decay_ratio_right : dict
        ``m -> max_i h_i**m exp(-rate dist_i) (N / scale)**m`` over the
        graded region at each end.
    transition_ratio : float
        ``h_{3N/4} * rate**(1 - eta) * N**eta`` for ``eta = 1/2``.

    """

    uniform_bounds_ok: bool
    graded_monotone_ok: bool
    transition_bounds: dict
    decay_ratio_left: dict
    decay_ratio_right: dict
    transition_ratio: float


@dataclass(frozen=True)
class LemmaReport:
    """Mesh-width diagnostics for both axes."""

    x: AxisReport
    y: AxisReport

    @property
    def exact_checks_ok(self) -> bool:
        """Whether the exact inequalities hold on both axes."""
        return all(
            r.uniform_bounds_ok and r.graded_monotone_ok for r in (self.x, self.y)
        )


def _axis_report(
    pts: np.ndarray,
    h: np.ndarray,
    N: int,
    rate_left: float,
    rate_right: float,
    width_left: float,
    width_right: float,
    tau: float,
    p: float,
) -> AxisReport:
    """Evaluate the width diagnostics along one axis.

    ``rate_*`` are the layer decay rates (``p mu0`` and ``p mu1`` in x,
    ``delta / sqrt(eps1)`` in y) and ``width_*`` the layer scales
    (``1/mu0``, ``1/mu1`` in x and ``sqrt(eps1)`` in y).

    """
    quarter, three_quarter = N // 4, 3 * N // 4
    middle = h[quarter:three_quarter]
    uniform_ok = bool(np.all(middle >= 1.0 / N) and np.all(middle <= 2.0 / N))

    left = h[: quarter - 1]
    right = h[three_quarter + 1 :]
    monotone_ok = bool(np.all(np.diff(left) >= 0) and np.all(np.diff(right) <= 0))

    upper = 4.0 * tau / (p * N)
    transition_bounds = {
        "left_lower": h[quarter - 1] / (tau / (2 * p) * width_left),
        "left_upper": upper / h[quarter - 1],
        "right_lower": h[three_quarter] / (tau / (2 * p) * width_right),
        "right_upper": upper / h[three_quarter],
        "right_tail": (1.0 - pts[three_quarter + 2])
        / (width_right * np.log(N)),
    }

    idx_left = np.arange(0, quarter - 1)
    idx_right = np.arange(three_quarter + 1, N)
    decay_left, decay_right = {}, {}
    for m in range(int(np.floor(tau)) + 1):
        decay_left[m] = float(
            np.max(
                h[idx_left] ** m
                * np.exp(-rate_left * pts[idx_left])
                * (N / width_left) ** m
            )
        )
        decay_right[m] = float(
            np.max(
                h[idx_right] ** m
                * np.exp(-rate_right * (1.0 - pts[idx_right + 1]))
                * (N / width_right) ** m
            )
        )

    eta = 0.5
    transition_ratio = float(
        h[three_quarter] * (1.0 / width_right) ** (1.0 - eta) * N**eta
    )

    return AxisReport(
        uniform_bounds_ok=uniform_ok,
        graded_monotone_ok=monotone_ok,
        transition_bounds={k: float(v) for k, v in transition_bounds.items()},
        decay_ratio_left=decay_left,
        decay_ratio_right=decay_right,
        transition_ratio=transition_ratio,
    )


def verify_mesh_lemmas(mesh: TensorMesh, params: MeshParams) -> LemmaReport:
    """Report the mesh-width properties the convergence analysis relies on.

    Parameters
    ----------
    mesh : TensorMesh
        Mesh built from ``params``.
    params : MeshParams
        Generator inputs.

    Returns
    -------
    report : LemmaReport
        Exact checks as booleans and bounded-constant checks as ratios.

    """
    sqrt_eps = np.sqrt(params.eps1)
    x_report = _axis_report(
        mesh.x,
        mesh.hx,
        params.N,
        rate_left=params.p * params.mu0,
        rate_right=params.p * params.mu1,
        width_left=1.0 / params.mu0,
        width_right=1.0 / params.mu1,
        tau=params.tau,
        p=params.p,
    )
    y_report = _axis_report(
        mesh.y,
        mesh.hy,
        params.N,
        rate_left=params.delta / sqrt_eps,
        rate_right=params.delta / sqrt_eps,
        width_left=sqrt_eps,
        width_right=sqrt_eps,
        tau=params.tau,
        p=params.delta,
    )

    return LemmaReport(x=x_report, y=y_report)
