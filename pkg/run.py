"""Runs a convergence study and writes its tables."""
import argparse
import logging
import os
import sys
from datetime import datetime

from dotenv import load_dotenv

from src.bakhvalov_fem.analysis.convergence_study import (
    DEFAULT_CONFIG,
    StudyConfig,
    emit,
    run_study,
)


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


class StudyArgumentParser(argparse.ArgumentParser):
    """Exits with code 1 on a bad flag; 2 is reserved for failed cases."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    """Command-line flags; list-valued flags take comma-separated values."""
    parser = StudyArgumentParser(description=__doc__)
    parser.add_argument("--config", default=DEFAULT_CONFIG, help="flat toml file")
    parser.add_argument("--problem", help="registered problem name")
    parser.add_argument("--k", type=_int_list, help="polynomial degrees")
    parser.add_argument("--N", type=_int_list, help="elements per direction")
    parser.add_argument("--eps1", type=_float_list, help="diffusion parameters")
    parser.add_argument("--eps2", type=_float_list, help="convection parameters")
    parser.add_argument("--tau", type=float, help="grading exponent, default k+1")
    parser.add_argument("--p", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--quad", type=int, help="assembly Gauss points")
    parser.add_argument("--error-quad", dest="error_quad", type=int)
    parser.add_argument("--solver", choices=["lu", "gmres"])
    parser.add_argument("--tol", type=float)
    parser.add_argument("--format", choices=["csv", "markdown", "json", "plot"])
    parser.add_argument("--out", help="output path stem")
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--fallback", choices=["error", "relax"])
    parser.add_argument(
        "--timings",
        action="store_true",
        default=None,
        help="fill the elapsed column",
    )
    return parser


def main(argv: list = None) -> int:
    """Run the study described by the config file and flags.

    Returns
    -------
    code: int
        0 when every case succeeded, 2 when any case failed and 1 for a
        configuration or output error.

    """
    load_dotenv()
    log_dir = os.getenv("BAKHVALOV_LOG_DIR", "log")
    os.makedirs(log_dir, exist_ok=True)
    session_name = f"convergence_study_{format(datetime.now(), '%Y_%m_%d_%H:%M')}"
    logger = logging.getLogger(__name__)
    log_fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(
        level=logging.INFO,
        format=log_fmt,
        filename=f"{log_dir}/{session_name}.log",
        filemode="a",
    )

    try:
        args = vars(build_parser().parse_args(argv))
    except SystemExit as e:
        if e.code:
            logger.error("Study aborted: invalid command-line flags")
        return e.code or 0
    path = args.pop("config")
    try:
        config = StudyConfig.from_toml(path, **args)
        result = run_study(config, logger)
        paths = emit(result)
    except (ValueError, TypeError, OSError) as e:
        logger.error(f"Study aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1

    for p in paths:
        logger.info(f"Wrote {p}")
    if result.failed:
        print(f"{len(result.failed)} case(s) failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
