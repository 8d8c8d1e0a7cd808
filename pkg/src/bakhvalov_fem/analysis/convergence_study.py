"""Convergence studies over (k, eps2, eps1, N) grids and their reports."""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product

import numpy as np
import polars as pl
import toml

from src.bakhvalov_fem.analysis.error_norms import CaseError, ErrorReport, rate, run_case
from src.bakhvalov_fem.discretisation.linsolve import SOLVER_METHODS, SolverConfig
from src.bakhvalov_fem.discretisation.mesh import FALLBACK_MODES
from src.bakhvalov_fem.discretisation.problem import PROBLEMS, get_problem

FORMATS = ("csv", "markdown", "json", "plot")
CSV_COLUMNS = [
    "N",
    "k",
    "eps1",
    "eps2",
    "tau",
    "p",
    "delta",
    "e_energy",
    "e_l2",
    "e_h1",
    "rate_energy",
    "solver_iters",
    "residual",
    "elapsed",
    "failure",
]
DEFAULT_CONFIG = "src/bakhvalov_fem/analysis/config.toml"
# parameter region where the energy-norm bound is proven
REGION_EPS1 = 1e-6
REGION_EPS2 = 1e-3


def region_warnings(eps1: float, eps2: float) -> list:
    """Warning records for a parameter pair outside the proven region.

    Returns
    -------
    records : list of dict
        Empty when ``0 < eps1 <= 1e-6`` and ``0 < eps2 <= 1e-3``, otherwise a
        single ``{"kind": "region", ...}`` record.

    """
    if 0 < eps1 <= REGION_EPS1 and 0 < eps2 <= REGION_EPS2:
        return []
    return [
        {
            "kind": "region",
            "eps1": eps1,
            "eps2": eps2,
            "message": (
                f"(eps1, eps2) = ({eps1:g}, {eps2:g}) lies outside "
                f"eps1 <= {REGION_EPS1:g}, eps2 <= {REGION_EPS2:g}"
            ),
        }
    ]


@dataclass
class StudyConfig:
    """Parameter grid and run options of a convergence study.

    Parameters
    ----------
    problem : str
        Registry name of the problem.
    k, N : list of int
        Polynomial degrees and element counts.
    eps1, eps2 : list of float
        Perturbation parameters.
    tau : float, optional
        Mesh grading exponent; None means k + 1 for each k.
    p, delta : float
        Mesh parameters.
    quad, error_quad : int, optional
        Gauss points per direction; None means k + 2 and k + 3.
    solver : str
        ``"lu"`` or ``"gmres"``.
    tol : float
        Solver relative residual target.
    format : str
        One of ``csv``, ``markdown``, ``json``, ``plot``.
    out : str
        Output path stem.
    jobs : int
        Worker processes; 1 runs in-process.
    fallback : str
        Transition-point policy of the mesh.
    timings : bool
        Whether to fill the elapsed column.

    """

    problem: str = "product-layers"
    k: list = field(default_factory=lambda: [1])
    N: list = field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    eps1: list = field(
        default_factory=lambda: [1.0, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10]
    )
    eps2: list = field(default_factory=lambda: [1.0])
    tau: float = None
    p: float = 0.5
    delta: float = 0.25
    quad: int = None
    error_quad: int = None
    solver: str = "lu"
    tol: float = 1e-10
    format: str = "csv"
    out: str = "outputs/study"
    jobs: int = 1
    fallback: str = "relax"
    timings: bool = False

    @classmethod
    def from_toml(cls, path: str = DEFAULT_CONFIG, **overrides) -> "StudyConfig":
        """Load a flat TOML file; keyword overrides that are not None win."""
        config = toml.load(path)
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config.update({key: v for key, v in overrides.items() if v is not None})
        return cls(**config)

    def validate(self) -> None:
        """Reject empty grids and invalid options.

        Raises
        ------
        ValueError
            Naming the offending field.

        """
        if self.problem not in PROBLEMS:
            raise ValueError(
                f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}"
            )
        for name in ("k", "N", "eps1", "eps2"):
            if not getattr(self, name):
                raise ValueError(f"{name} list is empty")
        if any(int(k) != k or k < 1 for k in self.k):
            raise ValueError(f"k entries must be integers >= 1, got {self.k}")
        if any(int(n) != n or n < 8 or n % 4 for n in self.N):
            raise ValueError(f"N entries must be >= 8 and divisible by 4, got {self.N}")
        if any(not 0 < e <= 1 for e in self.eps1):
            raise ValueError(f"eps1 entries must lie in (0, 1], got {self.eps1}")
        if any(not 0 <= e <= 1 for e in self.eps2):
            raise ValueError(f"eps2 entries must lie in [0, 1], got {self.eps2}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.solver not in SOLVER_METHODS:
            raise ValueError(
                f"solver must be one of {SOLVER_METHODS}, got {self.solver!r}"
            )
        if self.fallback not in FALLBACK_MODES:
            raise ValueError(
                f"fallback must be one of {FALLBACK_MODES}, got {self.fallback!r}"
            )
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    def cases(self) -> list[tuple[int, float, float, int]]:
        """Return ``(k, eps2, eps1, N)`` tuples in table order."""
        return list(product(self.k, self.eps2, self.eps1, self.N))


@dataclass(frozen=True)
class CaseFailure:
    """A case that raised instead of producing an ErrorReport."""

    N: int
    k: int
    eps1: float
    eps2: float
    tau: float
    p: float
    delta: float
    message: str


@dataclass
class StudyResult:
    """Outcome of every case, in configuration order."""

    config: StudyConfig
    cases: list

    @property
    def failed(self) -> list[CaseFailure]:
        """The failure cells."""
        return [c for c in self.cases if isinstance(c, CaseFailure)]

    def table(self) -> pl.DataFrame:
        """One row per case with the CSV columns."""
        rows = []
        for case in self.cases:
            row = {
                "N": case.N,
                "k": case.k,
                "eps1": case.eps1,
                "eps2": case.eps2,
                "tau": case.tau,
                "p": case.p,
                "delta": case.delta,
                "e_energy": None,
                "e_l2": None,
                "e_h1": None,
                "rate_energy": None,
                "solver_iters": None,
                "residual": None,
                "elapsed": None,
                "failure": None,
            }
            if isinstance(case, CaseFailure):
                row["failure"] = case.message
            else:
                row.update(
                    e_energy=case.e_energy,
                    e_l2=case.e_l2,
                    e_h1=case.e_h1,
                    rate_energy=case.rate_energy,
                    solver_iters=case.solve.iterations,
                    residual=case.solve.residual,
                    elapsed=case.elapsed if self.config.timings else None,
                )
            rows.append(row)
        schema = {
            "N": pl.Int64,
            "k": pl.Int64,
            "solver_iters": pl.Int64,
            "failure": pl.Utf8,
        }
        schema.update(
            {c: pl.Float64 for c in CSV_COLUMNS if c not in schema}
        )
        return pl.DataFrame(rows, schema=schema).select(CSV_COLUMNS)


def _run_one(args: tuple):
    """Run a single case; module level so worker processes can import it."""
    name, k, eps2, eps1, N, tau, p, delta, quad, error_quad, solver, fallback = args
    logger = logging.getLogger(__name__)
    try:
        return run_case(
            get_problem(name, eps1, eps2),
            N,
            k,
            tau=tau,
            p=p,
            delta=delta,
            solver_config=solver,
            quad=quad,
            error_quad=error_quad,
            fallback=fallback,
            logger=logger,
        )
    except CaseError as e:
        return CaseFailure(
            N=N,
            k=k,
            eps1=eps1,
            eps2=eps2,
            tau=float(k + 1) if tau is None else tau,
            p=p,
            delta=delta,
            message=str(e),
        )


def _with_rates(cases: list) -> list:
    """Fill rate_energy along N for each (k, eps2, eps1) series."""
    out = list(cases)
    series = {}
    for idx, case in enumerate(cases):
        series.setdefault((case.k, case.eps2, case.eps1), []).append(idx)
    for indices in series.values():
        ordered = sorted(indices, key=lambda i: cases[i].N)
        for a, b in zip(ordered, ordered[1:]):
            first, second = cases[a], cases[b]
            if isinstance(first, ErrorReport) and isinstance(second, ErrorReport):
                if first.e_energy > 0 and second.e_energy > 0:
                    out[a] = replace(
                        first,
                        rate_energy=rate(
                            first.e_energy, second.e_energy, second.N / first.N
                        ),
                    )
    return out


def run_study(config: StudyConfig, logger: logging.Logger = None) -> StudyResult:
    """Run every case of the grid.

    Per-case failures become CaseFailure cells; the sweep continues.

    Raises
    ------
    ValueError
        When the configuration is invalid.

    """
    logger = logger or logging.getLogger(__name__)
    config.validate()
    solver = SolverConfig(method=config.solver, tol=config.tol)
    jobs = [
        (
            config.problem,
            k,
            eps2,
            eps1,
            N,
            config.tau,
            config.p,
            config.delta,
            config.quad,
            config.error_quad,
            solver,
            config.fallback,
        )
        for k, eps2, eps1, N in config.cases()
    ]
    logger.info(f"Running {len(jobs)} cases with {config.jobs} worker(s)")

    if config.jobs == 1:
        cases = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            cases = list(pool.map(_run_one, jobs))

    result = StudyResult(config=config, cases=_with_rates(cases))
    if result.failed:
        logger.warning(f"{len(result.failed)} of {len(jobs)} cases failed")
    return result


def format_error(value: float) -> str:
    """Format as ``0.46E-1``: two significant digits, mantissa in [0.1, 1)."""
    if value is None or not np.isfinite(value):
        return "fail"
    if value == 0:
        return "0.00E0"
    exponent = int(np.floor(np.log10(abs(value)))) + 1
    mantissa = round(value / 10.0**exponent, 2)
    if abs(mantissa) >= 1.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.2f}E{exponent}"


def _markdown(table: pl.DataFrame) -> str:
    """Error and rate rows per eps1, one block per (k, eps2)."""
    lines = []
    blocks = table.select("k", "eps2").unique(maintain_order=True).iter_rows()
    for k, eps2 in blocks:
        block = table.filter((pl.col("k") == k) & (pl.col("eps2") == eps2))
        Ns = block["N"].unique(maintain_order=True).to_list()
        errors = block.pivot(on="N", index="eps1", values="e_energy")
        rates = block.pivot(on="N", index="eps1", values="rate_energy")

        lines.append(f"### k = {k}, eps2 = {eps2:g}")
        lines.append("")
        lines.append("| eps1 | | " + " | ".join(str(n) for n in Ns) + " |")
        lines.append("|---|---|" + "---|" * len(Ns))
        for err_row, rate_row in zip(
            errors.iter_rows(named=True), rates.iter_rows(named=True)
        ):
            err_cells = [format_error(err_row[str(n)]) for n in Ns]
            rate_cells = [
                "--" if rate_row[str(n)] is None else f"{rate_row[str(n)]:.2f}"
                for n in Ns
            ]
            lines.append(
                f"| {err_row['eps1']:g} | e | " + " | ".join(err_cells) + " |"
            )
            lines.append("| | rate | " + " | ".join(rate_cells) + " |")
        lines.append("")
    return "\n".join(lines)


def _records(result: StudyResult) -> list[dict]:
    records = []
    for case in result.cases:
        if isinstance(case, CaseFailure):
            record = asdict(case)
            record["failure"] = record.pop("message")
            record["warnings"] = region_warnings(case.eps1, case.eps2)
        else:
            record = asdict(case)
            record["warnings"] = region_warnings(case.eps1, case.eps2) + list(
                case.warnings
            )
            if not result.config.timings:
                record["elapsed"] = None
                record["solve"]["elapsed"] = None
        records.append(record)
    return records


def emit(result: StudyResult, fmt: str = None, out: str = None) -> list[str]:
    """Write the study in the requested format.

    Parameters
    ----------
    result : StudyResult
        Nonempty study outcome.
    fmt : str, optional
        Overrides ``result.config.format``.
    out : str, optional
        Overrides ``result.config.out``; used as a path stem.

    Returns
    -------
    paths : list of str
        Files written.

    Raises
    ------
    ValueError
        For an empty result or unknown format.
    OSError
        When the destination is not writable.

    """
    fmt = fmt or result.config.format
    out = out or result.config.out
    if not result.cases:
        raise ValueError("nothing to emit: study result is empty")
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)

    table = result.table()
    paths = []
    if fmt == "csv":
        path = f"{out}.csv"
        table.write_csv(path)
        paths.append(path)
    elif fmt == "markdown":
        path = f"{out}.md"
        with open(path, "w") as f:
            f.write(_markdown(table))
        paths.append(path)
    elif fmt == "json":
        path = f"{out}.json"
        with open(path, "w") as f:
            json.dump(
                {"config": asdict(result.config), "cases": _records(result)},
                f,
                indent=2,
            )
        paths.append(path)
    else:
        blocks = table.select("k", "eps2").unique(maintain_order=True).iter_rows()
        for k, eps2 in blocks:
            series = (
                table.filter((pl.col("k") == k) & (pl.col("eps2") == eps2))
                .with_columns(pl.format("eps1={}", pl.col("eps1")).alias("series"))
                .pivot(on="series", index="N", values="e_energy")
                .sort("N")
            )
            path = f"{out}_k{k}_eps2_{eps2:g}.csv"
            series.write_csv(path)
            paths.append(path)

    return paths
