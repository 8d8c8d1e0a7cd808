"""PDE data, the manufactured test problem and layer template functions."""

from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from src.bakhvalov_fem.discretisation.mesh import MeshParams, compute_mu

LAYER_KINDS = ("S", "E10", "E11", "E20", "E21", "E31", "E32", "E33", "E34")
SAMPLE_POINTS = 1001


class ProblemError(ValueError):
    """Raised when problem data violate the admissibility conditions."""


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with the derivatives the error norms need.

    Every callable takes broadcastable arrays ``(x, y)`` and returns an
    array of the broadcast shape.

    """

    u: Callable
    u_x: Callable
    u_y: Callable
    u_xx: Callable
    u_yy: Callable

    @classmethod
    def zero(cls) -> "ExactSolution":
        """Return the identically zero solution, for measuring norms."""

        def zero(x, y):
            return np.zeros(np.broadcast(x, y).shape)

        return cls(u=zero, u_x=zero, u_y=zero, u_xx=zero, u_yy=zero)


@dataclass(frozen=True)
class ProblemSpec:
    """Data of ``-eps1 Lap u + eps2 b(x) u_x + c(x) u = f`` with u = 0 on the boundary.

    Parameters
    ----------
    eps1, eps2 : float
        Diffusion and convection parameters.
    b, db, c : callable
        Coefficients of x only, and the derivative of b.
    f : callable
        Right-hand side of (x, y).
    lam, beta, gamma, b_star : float
        Lower bounds of b, c and ``c - eps2 b' / 2``, and the maximum of b.
    exact : ExactSolution, optional
        Known solution, when there is one.
    mu_override : tuple of float, optional
        Layer rates to use instead of the values computed from the bounds.
    name : str, optional
        Registry name.

    """

    eps1: float
    eps2: float
    b: Callable
    db: Callable
    c: Callable
    f: Callable
    lam: float
    beta: float
    gamma: float
    b_star: float
    exact: ExactSolution = None
    mu_override: tuple = None
    name: str = "custom"

    def characteristic_roots(self) -> tuple[float, float]:
        """Return ``(mu0, mu1)``, preferring the override when given."""
        if self.mu_override is not None:
            return self.mu_override
        return compute_mu(self.eps1, self.eps2, self.b_star, self.lam, self.beta)

    def mesh_params(
        self,
        N: int,
        tau: float,
        p: float = 0.5,
        delta: float = 0.25,
        fallback: str = "error",
    ) -> MeshParams:
        """Build mesh parameters for this problem."""
        mu0, mu1 = self.characteristic_roots()
        return MeshParams(
            N=N,
            tau=tau,
            p=p,
            delta=delta,
            mu0=mu0,
            mu1=mu1,
            eps1=self.eps1,
            fallback=fallback,
        )

    def validate(self) -> None:
        """Check the admissibility conditions on a sampling grid.

        Raises
        ------
        ProblemError
            When b, c or ``c - eps2 b'/2`` fall below their bounds, or f
            does not vanish at the corners.

        """
        if not 0 < self.eps1 <= 1:
            raise ProblemError(f"eps1 must lie in (0, 1], got {self.eps1}")
        if not 0 <= self.eps2 <= 1:
            raise ProblemError(f"eps2 must lie in [0, 1], got {self.eps2}")

        xs = np.linspace(0.0, 1.0, SAMPLE_POINTS)
        b, c, db = self.b(xs), self.c(xs), self.db(xs)
        if self.lam <= 0 or np.any(b < self.lam):
            raise ProblemError(f"b(x) >= lambda = {self.lam} > 0 violated")
        if self.beta <= 0 or np.any(c < self.beta):
            raise ProblemError(f"c(x) >= beta = {self.beta} > 0 violated")
        if self.gamma <= 0 or np.any(c - 0.5 * self.eps2 * db < self.gamma):
            raise ProblemError(
                f"c(x) - eps2 b'(x) / 2 >= gamma = {self.gamma} > 0 violated"
            )
        if np.any(b > self.b_star):
            raise ProblemError(f"b(x) exceeds b_star = {self.b_star}")

        corners = np.array([0.0, 0.0, 1.0, 1.0]), np.array([0.0, 1.0, 1.0, 0.0])
        if np.any(np.abs(self.f(*corners)) > 1e-10):
            raise ProblemError("f must vanish at the four corners")

    def residual(self, x, y) -> np.ndarray:
        """Evaluate ``L u - f`` for the exact solution at the given points."""
        if self.exact is None:
            raise ProblemError(f"problem {self.name!r} has no exact solution")
        ex = self.exact
        return (
            -self.eps1 * (ex.u_xx(x, y) + ex.u_yy(x, y))
            + self.eps2 * self.b(x) * ex.u_x(x, y)
            + self.c(x) * ex.u(x, y)
            - self.f(x, y)
        )


class _ExpFactor:
    """One-variable factor ``exp(-rate t)`` or ``exp(-rate (1 - t))``."""

    def __init__(self, rate: float, at_one: bool = False):
        self.rate = rate
        self.at_one = at_one

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        if self.at_one:
            return self.rate**order * np.exp(-self.rate * (1.0 - t))
        return (-self.rate) ** order * np.exp(-self.rate * t)


class _PolyFactor:
    """One-variable polynomial factor."""

    def __init__(self, coef):
        self.poly = Polynomial(coef)

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        return self.poly.deriv(order)(t) if order else self.poly(t)


class LayerTemplate:
    """Canonical separable representative of one solution component.

    Parameters
    ----------
    kind : str
        One of ``LAYER_KINDS``.
    fx, fy : callable
        One-variable factors supporting ``factor(t, order)``.

    """

    def __init__(self, kind: str, fx, fy):
        self.kind = kind
        self._fx = fx
        self._fy = fy

    def __call__(self, x, y):
        return self._fx(x) * self._fy(y)

    def derivative(self, x, y, i: int = 0, j: int = 0):
        """Return the partial derivative of order ``i`` in x and ``j`` in y."""
        return self._fx(x, i) * self._fy(y, j)

    def dx(self, x, y):
        return self.derivative(x, y, 1, 0)

    def dy(self, x, y):
        return self.derivative(x, y, 0, 1)


def layer_template(kind: str, params: MeshParams) -> LayerTemplate:
    """Return the representative function of a decomposition component.

    Parameters
    ----------
    kind : str
        ``"S"`` or one of the layer kinds ``E10`` ... ``E34``.
    params : MeshParams
        Supplies ``mu0``, ``mu1``, ``eps1``, ``p`` and ``delta``.

    Returns
    -------
    template : LayerTemplate
        Exact evaluator with partial derivatives of any order.

    Raises
    ------
    ProblemError
        For an unknown kind.

    """
    if kind not in LAYER_KINDS:
        raise ProblemError(f"unknown layer kind {kind!r}")

    one = _PolyFactor([1.0])
    x_factors = {
        "0": _ExpFactor(params.p * params.mu0),
        "1": _ExpFactor(params.p * params.mu1, at_one=True),
        None: one,
    }
    y_rate = params.delta / np.sqrt(params.eps1)
    y_factors = {
        "0": _ExpFactor(y_rate),
        "1": _ExpFactor(y_rate, at_one=True),
        None: one,
    }

    if kind == "S":
        # x**2 * y * (1 - y)
        return LayerTemplate(kind, _PolyFactor([0, 0, 1]), _PolyFactor([0, 1, -1]))

    x_side, y_side = _KIND_SIDES[kind]
    return LayerTemplate(kind, x_factors[x_side], y_factors[y_side])


# (x side, y side) of the boundary each component decays away from
_KIND_SIDES = {
    "S": (None, None),
    "E10": ("0", None),
    "E11": ("1", None),
    "E20": (None, "0"),
    "E21": (None, "1"),
    "E31": ("0", "0"),
    "E32": ("1", "0"),
    "E33": ("1", "1"),
    "E34": ("0", "1"),
}
_SIDES_KIND = {sides: kind for kind, sides in _KIND_SIDES.items()}


def manufactured_roots(eps1: float, eps2: float) -> tuple[float, float]:
    """Layer rates of the manufactured problem, b = 2 - x and c = 1."""
    return compute_mu(eps1, eps2, b_star=2.0, lam=1.0, beta=1.0)


def _layer_factors(eps1: float, eps2: float):
    """Return the four one-variable exponentials of the product solution.

    Each entry maps to ``(g, g', g'')`` callables of one variable, where the
    solution factor is ``1 - g``.

    """
    mu0, mu1 = manufactured_roots(eps1, eps2)
    r = 1.0 / np.sqrt(eps1)

    def at_zero(rate):
        return (
            lambda t: np.exp(-rate * t),
            lambda t: -rate * np.exp(-rate * t),
            lambda t: rate**2 * np.exp(-rate * t),
        )

    def at_one(rate):
        return (
            lambda t: np.exp(-rate * (1.0 - t)),
            lambda t: rate * np.exp(-rate * (1.0 - t)),
            lambda t: rate**2 * np.exp(-rate * (1.0 - t)),
        )

    return at_zero(mu0), at_one(mu1), at_zero(r), at_one(r)


def _factor_pair(g0, g1):
    """Value and derivatives of ``(1 - g0)(1 - g1)`` in one variable."""

    def value(t):
        return (1.0 - g0[0](t)) * (1.0 - g1[0](t))

    def first(t):
        return -g0[1](t) * (1.0 - g1[0](t)) - (1.0 - g0[0](t)) * g1[1](t)

    def second(t):
        return (
            -g0[2](t) * (1.0 - g1[0](t))
            + 2.0 * g0[1](t) * g1[1](t)
            - (1.0 - g0[0](t)) * g1[2](t)
        )

    return value, first, second


def manufactured_problem(eps1: float, eps2: float) -> ProblemSpec:
    """Build the manufactured problem with a product of four layer factors.

    ``-eps1 Lap u + eps2 (2 - x) u_x + u = f`` with exact solution
    ``u = 1/4 (1 - e^{-mu0 x})(1 - e^{-mu1 (1-x)})(1 - e^{-y/sqrt(eps1)})
    (1 - e^{-(1-y)/sqrt(eps1)})`` and f obtained by applying the operator to
    u in closed form.

    Parameters
    ----------
    eps1 : float
        Diffusion parameter, positive.
    eps2 : float
        Convection parameter, non-negative.

    Returns
    -------
    problem : ProblemSpec
        Problem with ``lambda = beta = 1``, ``b_star = 2`` and
        ``gamma = 1 + eps2 / 2``.

    """
    if eps1 <= 0:
        raise ValueError(f"eps1 must be positive, got {eps1}")
    if eps2 < 0:
        raise ValueError(f"eps2 must be non-negative, got {eps2}")

    gx0, gx1, gy0, gy1 = _layer_factors(eps1, eps2)
    X, dX, ddX = _factor_pair(gx0, gx1)
    Y, dY, ddY = _factor_pair(gy0, gy1)

    def u(x, y):
        return 0.25 * X(x) * Y(y)

    def u_x(x, y):
        return 0.25 * dX(x) * Y(y)

    def u_y(x, y):
        return 0.25 * X(x) * dY(y)

    def u_xx(x, y):
        return 0.25 * ddX(x) * Y(y)

    def u_yy(x, y):
        return 0.25 * X(x) * ddY(y)

    def b(x):
        return 2.0 - np.asarray(x, dtype=float)

    def db(x):
        return -np.ones_like(np.asarray(x, dtype=float))

    def c(x):
        return np.ones_like(np.asarray(x, dtype=float))

    def f(x, y):
        return (
            -eps1 * (u_xx(x, y) + u_yy(x, y))
            + eps2 * b(x) * u_x(x, y)
            + c(x) * u(x, y)
        )

    return ProblemSpec(
        eps1=eps1,
        eps2=eps2,
        b=b,
        db=db,
        c=c,
        f=f,
        lam=1.0,
        beta=1.0,
        gamma=1.0 + 0.5 * eps2,
        b_star=2.0,
        exact=ExactSolution(u=u, u_x=u_x, u_y=u_y, u_xx=u_xx, u_yy=u_yy),
        mu_override=manufactured_roots(eps1, eps2),
        name="product-layers",
    )


def layer_decomposition(eps1: float, eps2: float) -> list[tuple[str, Callable]]:
    """Split the manufactured solution into the nine component kinds.

    Expanding the product of four ``(1 - g)`` factors gives 16 signed terms.
    A term is filed under the x = 1 side if it contains the x = 1
    exponential, else under x = 0 if it contains that one; likewise y = 0
    takes precedence over y = 1. The (x side, y side) pair names the kind.

    Returns
    -------
    decomposition : list of (str, callable)
        One ``(kind, function)`` per kind present, summing to u.

    """
    gx0, gx1, gy0, gy1 = _layer_factors(eps1, eps2)
    groups = {}
    for a0, a1, c0, c1 in product((False, True), repeat=4):
        x_side = "1" if a1 else ("0" if a0 else None)
        y_side = "0" if c0 else ("1" if c1 else None)
        kind = _SIDES_KIND[(x_side, y_side)]
        groups.setdefault(kind, []).append((a0, a1, c0, c1))

    def make_component(terms):
        def component(x, y):
            total = 0.0
            for a0, a1, c0, c1 in terms:
                sign = (-1) ** (a0 + a1 + c0 + c1)
                term = 0.25 * sign * np.ones(np.broadcast(x, y).shape)
                if a0:
                    term = term * gx0[0](x)
                if a1:
                    term = term * gx1[0](x)
                if c0:
                    term = term * gy0[0](y)
                if c1:
                    term = term * gy1[0](y)
                total = total + term
            return total

        return component

    return [(kind, make_component(groups[kind])) for kind in LAYER_KINDS]


PROBLEMS = {"product-layers": manufactured_problem}


def get_problem(name: str, eps1: float, eps2: float) -> ProblemSpec:
    """Look up a built-in problem by name."""
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise ProblemError(
            f"unknown problem {name!r}; known: {sorted(PROBLEMS)}"
        ) from None
    return builder(eps1, eps2)
