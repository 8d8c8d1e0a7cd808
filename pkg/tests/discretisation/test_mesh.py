"""Tests for mesh module."""

import json

import numpy as np
import pandas as pd
import pytest
from src.bakhvalov_fem.discretisation.mesh import (
    MeshError,
    MeshParams,
    build_mesh,
    compute_mu,
    verify_mesh_lemmas,
)
from src.bakhvalov_fem.discretisation.problem import (
    manufactured_problem,
    manufactured_roots,
)

pytest_plugins = ["tests.discretisation.test_fixtures"]

GRID_EPS1 = [1e-4, 1e-6, 1e-8, 1e-10]
GRID_EPS2 = [1.0, 1e-4, 1e-8]
GRID_N = [8, 16, 32, 64, 128, 256, 512]


def test_compute_mu_unit_parameters():
    """Test closed-form roots for eps1 = eps2 = 1."""
    mu0, mu1 = compute_mu(1.0, 1.0, b_star=2.0, lam=1.0, beta=1.0)
    assert mu0 == pytest.approx(np.sqrt(2.0) - 1.0, rel=1e-14)
    assert mu1 == pytest.approx((1.0 + np.sqrt(5.0)) / 2.0, rel=1e-14)
    # test: mu0 solves -eps1 g^2 - eps2 b* g + beta = 0
    assert abs(-(mu0**2) - 2.0 * mu0 + 1.0) < 1e-12


def test_compute_mu_small_parameters():
    """Test roots and residuals for eps1 = eps2 = 1e-4."""
    eps1, eps2 = 1e-4, 1e-4
    mu0, mu1 = compute_mu(eps1, eps2, b_star=2.0, lam=1.0, beta=1.0)
    assert mu0 == pytest.approx(99.0050, rel=1e-6)
    assert mu1 == pytest.approx(100.5012, rel=1e-6)
    assert abs(-eps1 * mu0**2 - 2.0 * eps2 * mu0 + 1.0) < 1e-9
    assert abs(-eps1 * mu1**2 + eps2 * mu1 + 1.0) < 1e-9


@pytest.mark.parametrize("eps1", [1.0, 1e-4, 1e-10])
@pytest.mark.parametrize("eps2", [0.0, 1e-8, 1.0])
def test_compute_mu_ordering(eps1, eps2):
    """Test mu0 never exceeds mu1."""
    mu0, mu1 = compute_mu(eps1, eps2, b_star=2.0, lam=1.0, beta=1.0)
    assert 0 < mu0 <= mu1


@pytest.mark.parametrize(
    "args",
    [
        (0.0, 1.0, 2.0, 1.0, 1.0),
        (-1e-4, 1.0, 2.0, 1.0, 1.0),
        (1e-4, 1.0, 2.0, 1.0, 0.0),
        (1e-4, -1.0, 2.0, 1.0, 1.0),
        (1e-4, 1.0, 1.0, 2.0, 1.0),
    ],
)
def test_compute_mu_rejects_invalid(args):
    """Test domain errors for eps1 <= 0, beta <= 0 and bad bounds."""
    with pytest.raises(ValueError):
        compute_mu(*args)


@pytest.mark.parametrize("N", [4, 6, 10, 30])
def test_mesh_params_rejects_bad_N(N):
    """Test N must be at least 8 and divisible by 4."""
    with pytest.raises(MeshError):
        MeshParams(N=N, tau=2.0, p=0.5, delta=0.25, mu0=1e3, mu1=1e4, eps1=1e-6)


def test_mesh_params_flags(tight_params):
    """Test assumption flags on a fully admissible parameter set."""
    assert tight_params.mu_ok
    assert tight_params.sigma_ok
    relaxed = MeshParams(N=64, tau=2.0, p=0.5, delta=0.25, mu0=10.0, mu1=1e4, eps1=1e-6)
    # test: mu0 < N breaks the rate assumption
    assert not relaxed.mu_ok


def test_build_mesh_invariants(mesh, params):
    """Test endpoints, pinned transition points and widths."""
    N = params.N
    assert mesh.x[0] == 0.0 and mesh.x[N] == 1.0
    assert mesh.y[0] == 0.0 and mesh.y[N] == 1.0
    assert mesh.x[N // 4] == params.sigma_x0
    assert mesh.x[3 * N // 4] == 1.0 - params.sigma_x1
    assert mesh.y[N // 4] == params.sigma_y
    assert np.all(np.diff(mesh.x) > 0) and np.all(np.diff(mesh.y) > 0)
    assert np.array_equal(mesh.hx, mesh.x[1:] - mesh.x[:-1])
    assert abs(mesh.hx.sum() - 1.0) <= 8 * N * np.finfo(float).eps
    assert abs(mesh.hy.sum() - 1.0) <= 8 * N * np.finfo(float).eps
    assert mesh.warnings == ()


def test_build_mesh_first_point():
    """Test sigma_x0 and x[1] against independent evaluation, N = 8, tau = 2."""
    mu0, mu1 = manufactured_roots(1e-4, 1e-4)
    params = MeshParams(
        N=8, tau=2.0, p=0.5, delta=0.25, mu0=mu0, mu1=mu1, eps1=1e-4,
        fallback="relax",
    )
    mesh = build_mesh(params)
    closed_form = 2.0 / (0.5 * mu0) * np.log(mu0)
    assert params.sigma_x0 == pytest.approx(closed_form, rel=1e-12)
    # test: agrees with the tabulated transition point to four digits
    assert round(params.sigma_x0, 4) == 0.1857
    expected = (4.0 / mu0) * -np.log(1.0 - 4.0 * (1.0 - 1.0 / mu0) / 8.0)
    assert mesh.x[1] == pytest.approx(expected, rel=1e-12)


def test_build_mesh_sigma_violation_raises():
    """Test the strict policy names the offending transition point."""
    mu0, mu1 = manufactured_roots(1e-4, 1e-4)
    params = MeshParams(N=8, tau=2.0, p=0.5, delta=0.25, mu0=mu0, mu1=mu1, eps1=1e-4)
    with pytest.raises(MeshError, match="sigma_y"):
        build_mesh(params)


def test_build_mesh_relax_uniform_quarter():
    """Test a negative transition point gives a uniform first quarter."""
    problem = manufactured_problem(1e-8, 1.0)
    params = problem.mesh_params(16, tau=2.0, fallback="relax")
    assert params.sigma_x0 <= 0
    mesh = build_mesh(params)
    assert np.array_equal(mesh.x[:5], np.arange(5) / 16)
    kinds = [w["kind"] for w in mesh.warnings]
    # test: both the rate and the transition-point assumptions are flagged
    assert "mu" in kinds and "sigma" in kinds
    assert any("sigma_x0" in w["message"] for w in mesh.warnings)


def test_build_mesh_mu_warning_only():
    """Test mu0 < N proceeds with a single warning record."""
    params = MeshParams(N=64, tau=2.0, p=0.5, delta=0.25, mu0=2e3, mu1=1e4, eps1=1e-8)
    assert build_mesh(params).warnings == ()
    params = MeshParams(N=64, tau=1.0, p=0.5, delta=0.25, mu0=40.0, mu1=1e4, eps1=1e-8)
    mesh = build_mesh(params)
    assert [w["kind"] for w in mesh.warnings] == ["mu"]


def test_build_mesh_symmetric_rates():
    """Test the x-mesh is symmetric when mu0 equals mu1."""
    params = MeshParams(N=32, tau=2.0, p=0.5, delta=0.25, mu0=1e4, mu1=1e4, eps1=1e-6)
    mesh = build_mesh(params)
    assert np.allclose(mesh.x + mesh.x[::-1], 1.0, rtol=0, atol=1e-12)


def test_mesh_exports(mesh, tmp_path):
    """Test text and JSON exports hold the mesh points."""
    stem = tmp_path / "mesh"
    mesh.to_text(str(stem))
    df = pd.read_csv(
        f"{stem}_x.txt", sep=" ", header=None, float_precision="round_trip"
    )
    assert df.shape == (mesh.N + 1, 2)
    assert np.array_equal(df[1].to_numpy(), mesh.x)

    mesh.to_json(str(tmp_path / "mesh.json"))
    with open(tmp_path / "mesh.json") as f:
        data = json.load(f)
    assert data["y"] == mesh.y.tolist()


def test_verify_mesh_lemmas_single(mesh, params):
    """Test exact width checks and the m = 0 decay ratio."""
    report = verify_mesh_lemmas(mesh, params)
    assert report.exact_checks_ok
    # test: exp(-p mu0 x_i) is maximal at x_0 = 0
    assert report.x.decay_ratio_left[0] == 1.0
    assert report.y.decay_ratio_left[0] == 1.0
    assert set(report.x.decay_ratio_left) == {0, 1, 2}
    for side in ("left_lower", "left_upper", "right_lower", "right_upper"):
        assert report.x.transition_bounds[side] >= 1.0
        assert report.y.transition_bounds[side] >= 1.0


def test_verify_mesh_lemmas_sweep(problem):
    """Test decay and transition ratios stay bounded as N grows."""
    tau, p = 2.0, 0.5
    decay, transition = [], []
    for N in [8, 16, 32, 64]:
        params = problem.mesh_params(N, tau=tau, p=p)
        report = verify_mesh_lemmas(build_mesh(params), params)
        decay.append(
            max(
                max(r.decay_ratio_left.values()) + max(r.decay_ratio_right.values())
                for r in (report.x, report.y)
            )
        )
        transition.append(report.x.transition_ratio)
    assert max(decay) <= 2.0 * decay[0]
    assert max(transition) <= 2.0 * np.sqrt(5.0) * tau / p


def test_uniform_region_bounds_experiment_grid():
    """Test 1/N <= h <= 2/N on the uniform region across the table grid."""
    checked = 0
    for eps1 in GRID_EPS1:
        for eps2 in GRID_EPS2:
            problem = manufactured_problem(eps1, eps2)
            for N in GRID_N:
                params = problem.mesh_params(N, tau=2.0, fallback="relax")
                mesh = build_mesh(params)
                if any("graded formula kept" in w["message"] for w in mesh.warnings):
                    continue
                report = verify_mesh_lemmas(mesh, params)
                assert report.x.uniform_bounds_ok, (eps1, eps2, N)
                assert report.y.uniform_bounds_ok, (eps1, eps2, N)
                assert report.x.graded_monotone_ok, (eps1, eps2, N)
                checked += 1
    # test: only the eps1 = 1e-4 rows keep an oversized graded region
    assert checked == (len(GRID_EPS1) - 1) * len(GRID_EPS2) * len(GRID_N)
