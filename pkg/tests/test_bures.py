import numpy as np
import pytest
import scipy.linalg
import scipy.optimize
from hypothesis import given, settings, strategies as st

from jkoflow import bures
from jkoflow.bures import GaussianState, LinearFokkerPlanck
from jkoflow.matcore import MatrixDomainError


def exact_ou(s0, sys_, t):
    """Closed-form Gaussian solution of the linear Fokker-Planck equation."""
    a = sys_.drift
    e = scipy.linalg.expm(t * a)
    sinf = scipy.linalg.solve_continuous_lyapunov(a, -2.0 / sys_.beta * np.eye(s0.dim))
    return e @ s0.mean, sinf + e @ (s0.cov - sinf) @ e.T


def gaussian_free_energy(mean, cov, sys_):
    """int V rho + (1/beta) int rho log rho with V(x) = -x^T A x / 2."""
    a = sys_.drift
    potential = -0.5 * (mean @ a @ mean + np.trace(a @ cov))
    neg_entropy = -0.5 * np.log(np.linalg.det(2 * np.pi * np.e * cov))
    return potential + neg_entropy / sys_.beta


def test_w2_matches_sqrtm_formula():
    rng = np.random.default_rng(0)
    m1, m2 = rng.standard_normal((2, 3, 3))
    a = GaussianState(rng.standard_normal(3), m1 @ m1.T + np.eye(3))
    b = GaussianState(rng.standard_normal(3), m2 @ m2.T + np.eye(3))
    ra = scipy.linalg.sqrtm(a.cov).real
    cross = scipy.linalg.sqrtm(ra @ b.cov @ ra).real
    ref = np.sum((a.mean - b.mean) ** 2) + np.trace(a.cov + b.cov - 2 * cross)
    assert bures.bures_w2(a, b) == pytest.approx(np.sqrt(ref), rel=1e-10)
    assert bures.bures_w2(a, a) == pytest.approx(0.0, abs=1e-7)


def test_w2_commuting_case():
    a = GaussianState(np.zeros(2), np.diag([1.0, 4.0]))
    b = GaussianState(np.array([3.0, 4.0]), np.diag([4.0, 9.0]))
    assert bures.bures_w2(a, b) == pytest.approx(np.sqrt(25 + 1 + 1), rel=1e-12)


def test_state_validation():
    with pytest.raises(MatrixDomainError):
        GaussianState(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        GaussianState(np.zeros(3), np.eye(2))
    with pytest.raises(ValueError):
        LinearFokkerPlanck(np.eye(2), 0.0)


def test_rk4_matches_exact_solution():
    sys_, s0 = bures.random_instance(4)
    s1 = bures.rk4_integrate(s0, sys_, 1.0, 200)
    mean, cov = exact_ou(s0, sys_, 1.0)
    np.testing.assert_allclose(s1.mean, mean, atol=1e-10)
    np.testing.assert_allclose(s1.cov, cov, atol=1e-9)


def test_rk4_is_fourth_order():
    sys_, s0 = bures.random_instance(1)
    _, cov = exact_ou(s0, sys_, 1.0)
    errs = [np.linalg.norm(bures.rk4_integrate(s0, sys_, 1.0, n).cov - cov) for n in (5, 10, 20)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.7)


def test_analytic_step_minimizes_jko_objective():
    """Direct minimization over (mean, Cholesky factor) in 2D as an independent oracle."""
    a = np.array([[-0.7, 0.2], [0.2, -0.4]])
    sys_ = LinearFokkerPlanck(a, 1.5)
    s0 = GaussianState(np.array([0.6, -1.1]), np.array([[1.3, 0.4], [0.4, 0.8]]))
    eta = 0.3

    def objective(p):
        l = np.array([[np.exp(p[2]), 0.0], [p[3], np.exp(p[4])]])
        s = GaussianState(p[:2], l @ l.T)
        return gaussian_free_energy(s.mean, s.cov, sys_) + bures.bures_w2(s0, s) ** 2 / (2 * eta)

    l0 = np.linalg.cholesky(s0.cov)
    p0 = np.array([*s0.mean, np.log(l0[0, 0]), l0[1, 0], np.log(l0[1, 1])])
    res = scipy.optimize.minimize(objective, p0, method="Nelder-Mead",
                                  options=dict(xatol=1e-11, fatol=1e-14, maxiter=20000, maxfev=40000))
    l = np.array([[np.exp(res.x[2]), 0.0], [res.x[3], np.exp(res.x[4])]])
    step = bures.jko_analytic_step(s0, sys_, eta)
    np.testing.assert_allclose(step.mean, res.x[:2], atol=1e-5)
    np.testing.assert_allclose(step.cov, l @ l.T, atol=1e-5)
    assert bures.jko_residual(s0, step, sys_, eta) < 1e-12


def test_analytic_step_mean_is_implicit_euler():
    sys_, s0 = bures.random_instance(2)
    eta = 0.1
    step = bures.jko_analytic_step(s0, sys_, eta)
    np.testing.assert_allclose(step.mean, np.linalg.solve(np.eye(3) - eta * sys_.drift, s0.mean), atol=1e-14)


def test_stationary_covariance_is_fixed_by_jko_step():
    a = np.diag([-0.5, -2.0])
    sys_ = LinearFokkerPlanck(a, 2.0)
    fixed = GaussianState(np.zeros(2), np.diag([1.0, 0.25]))  # -A^{-1}/beta
    step = bures.jko_analytic_step(fixed, sys_, 0.4)
    np.testing.assert_allclose(step.cov, fixed.cov, atol=1e-13)


def test_correction_examples():
    # identity drift and covariance: A^2 S - S^{-1} / beta^2 vanishes
    s = GaussianState(np.zeros(2), np.eye(2))
    sys_ = LinearFokkerPlanck(-np.eye(2), 1.0)
    dm, dc = bures.corrected_rhs(s, sys_, 0.1)
    np.testing.assert_allclose(dc, np.zeros((2, 2)), atol=1e-15)
    # stationary state of a diagonal drift: the corrected covariance velocity also vanishes
    s = GaussianState(np.array([1.0, 0.0]), np.diag([1.0, 0.5]))
    sys_ = LinearFokkerPlanck(np.diag([-1.0, -2.0]), 1.0)
    dm, dc = bures.corrected_rhs(s, sys_, 0.1)
    np.testing.assert_allclose(dc, np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(dm, [-1.0 + 0.1 * 0.5, 0.0], atol=1e-15)


def test_correction_formula_frozen_value():
    s = GaussianState(np.array([1.0, -2.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    a = np.array([[-1.0, 0.3], [0.3, -0.5]])
    sys_ = LinearFokkerPlanck(a, 2.0)
    cm, cc = bures.correction_rhs(s, sys_)
    a2 = a @ a
    ref = 0.5 * (a2 @ s.cov + s.cov @ a2) - np.linalg.inv(s.cov) / 4.0
    np.testing.assert_allclose(cc, ref, atol=1e-14)
    np.testing.assert_allclose(cm, 0.5 * a2 @ s.mean, atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**5))
def test_richardson_coefficient_matches_correction(seed):
    sys_, s0 = bures.random_instance(seed)
    cm, cc = bures.jko_second_order_coefficients(s0, sys_)
    rm, rc = bures.correction_rhs(s0, sys_)
    assert np.linalg.norm(cc - rc) / np.linalg.norm(rc) < 1e-4
    assert np.linalg.norm(cm - rm) < 1e-6


def test_richardson_requires_halving():
    sys_, s0 = bures.random_instance(0)
    with pytest.raises(ValueError):
        bures.jko_second_order_coefficients(s0, sys_, etas=(1e-2, 4e-3, 2e-3))


def test_random_instance_spectrum_and_reproducibility():
    sys_, s0 = bures.random_instance(9)
    np.testing.assert_allclose(np.linalg.eigvalsh(sys_.drift), [-1.2, -0.6, -0.2], atol=1e-12)
    assert np.linalg.eigvalsh(s0.cov).min() >= 0.5 - 1e-12
    sys2, s2 = bures.random_instance(9)
    assert np.array_equal(s0.cov, s2.cov) and np.array_equal(sys_.drift, sys2.drift)


def test_error_table_and_csv(tmp_path):
    sys_, s0 = bures.random_instance(0)
    rows = bures.bw_error_scaling(sys_, s0, [0.25, 0.125, 0.0625], steps_per_eta=50)
    assert [r.eta for r in rows] == [0.25, 0.125, 0.0625]
    assert all(r.w2_modified < r.w2_vanilla for r in rows)
    path = tmp_path / "e.csv"
    bures.write_error_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(bures.ERROR_CSV_HEADER)
    assert lines[1].split(",")[0] == "2.50000e-01"
