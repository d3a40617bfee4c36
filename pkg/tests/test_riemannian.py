import math

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from jkoflow import riemannian as rm
from jkoflow.riemannian import Euclidean, ObjectiveFn, Sphere

S2 = Sphere(3)


def tangent(x, seed, scale=1.0):
    v = np.random.default_rng(seed).standard_normal(3)
    return scale * S2.project(x, v)


# manifolds ------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(1e-6, 2.5))
def test_sphere_exp_log_roundtrip(seed, scale):
    x = S2.random_point(seed)
    v = tangent(x, seed + 1)
    v = scale * v / np.linalg.norm(v)
    y = S2.exp(x, v)
    assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(S2.log(x, y), v, atol=1e-10)
    assert S2.dist(x, y) == pytest.approx(scale, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_parallel_transport_is_isometric_and_tangent(seed):
    x, y = S2.random_point(seed), S2.random_point(seed + 7)
    u, v = tangent(x, seed + 1), tangent(x, seed + 2)
    tu, tv = S2.transport(x, y, u), S2.transport(x, y, v)
    assert abs(np.dot(tu, y)) < 1e-12
    assert np.dot(tu, tv) == pytest.approx(np.dot(u, v), abs=1e-12)
    # the geodesic direction is carried to minus the log back
    np.testing.assert_allclose(S2.transport(x, y, S2.log(x, y)), -S2.log(y, x), atol=1e-12)


def test_sphere_distance_matches_arccos():
    x, y = S2.random_point(1), S2.random_point(2)
    assert S2.dist(x, y) == pytest.approx(math.acos(np.dot(x, y)), rel=1e-12)


def test_antipodal_log_raises():
    x = np.array([0.0, 0.0, 1.0])
    with pytest.raises(rm.InjectivityError):
        S2.log(x, -x)
    with pytest.raises(ValueError):
        S2.check_point(np.array([1.0, 1.0, 0.0]))


def test_sphere_hessian_matches_second_derivative_along_geodesic():
    f = rm.sphere_test_objective(0.3)
    x = S2.random_point(5)
    v = tangent(x, 6)
    hv = S2.hessian_vector(x, f.ambient_gradient(x), f.ambient_hessian(x), v)
    t = 1e-4
    second = (f.value(S2.exp(x, t * v)) - 2 * f.value(x) + f.value(S2.exp(x, -t * v))) / t**2
    assert np.dot(hv, v) == pytest.approx(second, rel=1e-5)


def test_objective_probe_catches_wrong_gradient():
    with pytest.raises(ValueError):
        ObjectiveFn(lambda x: float(x[0] ** 2), lambda x: np.array([x[0]]), probes=np.array([[1.0]]))


# steps ----------------------------------------------------------------------


def test_forward_step_on_sphere_is_exponential_map():
    f = rm.sphere_test_objective()
    x = S2.random_point(0)
    g = rm.riemannian_gradient(S2, f, x)
    np.testing.assert_allclose(rm.forward_euler_step(S2, f, x, 0.1), S2.exp(x, -0.1 * g), atol=1e-15)


@pytest.mark.parametrize("eta", [0.5, 0.125, 2**-7])
def test_backward_step_quadratic_is_exact_proximal(eta):
    y = rm.backward_euler_step(Euclidean(1), rm.quadratic_objective([1.0]), np.array([1.0]), eta)
    assert y[0] == pytest.approx(1.0 / (1.0 + eta), abs=1e-12)


def test_backward_step_quartic_solves_cubic():
    y = rm.backward_euler_step(Euclidean(1), rm.quartic_objective(), np.array([1.0]), 0.1)
    ref = scipy.optimize.brentq(lambda z: z + 0.1 * z**3 - 1.0, 0.0, 1.0, xtol=1e-15)
    assert y[0] == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.92169899, abs=1e-8)


@pytest.mark.parametrize("seed", [0, 3])
@pytest.mark.parametrize("eta", [0.05, 0.25])
def test_backward_step_on_sphere_minimizes_proximal_objective(seed, eta):
    f = rm.sphere_test_objective()
    x = S2.random_point(seed)
    y, info = rm.backward_euler_step(S2, f, x, eta, return_info=True)

    def prox(p):
        z = S2.normalize(p)
        return f.value(z) + S2.dist(x, z) ** 2 / (2 * eta)

    res = scipy.optimize.minimize(prox, x, method="Nelder-Mead", options=dict(xatol=1e-12, fatol=1e-15, maxiter=20000))
    np.testing.assert_allclose(y, S2.normalize(res.x), atol=1e-6)
    assert info["residual"] < 1e-10


def test_backward_step_rejects_bad_eta():
    with pytest.raises(ValueError):
        rm.backward_euler_step(S2, rm.sphere_test_objective(), S2.random_point(0), 0.0)


# modified objective -----------------------------------------------------------


def test_effective_hessian_values():
    h = np.diag([1.0, 2.0])
    np.testing.assert_allclose(rm.effective_hessian(h, 0.1, "backward"), np.diag([0.95, 1.8]))
    np.testing.assert_allclose(rm.effective_hessian(h, 0.1, "forward"), np.diag([1.05, 2.2]))


@pytest.mark.parametrize("scheme", ["forward", "backward"])
def test_effective_hessian_matches_finite_difference(scheme):
    hd = [1.0, 2.0]
    g = rm.modified_objective(rm.quadratic_objective(hd), 0.1, scheme, Euclidean(2))
    t = 1e-4
    fd = [(g.value(np.eye(2)[i] * t) - 2 * g.value(np.zeros(2)) + g.value(-np.eye(2)[i] * t)) / t**2 for i in range(2)]
    np.testing.assert_allclose(fd, np.diag(rm.effective_hessian(np.diag(hd), 0.1, scheme)), rtol=1e-6)


@pytest.mark.parametrize("scheme", ["forward", "backward"])
def test_modified_gradient_on_sphere(scheme):
    f = rm.sphere_test_objective()
    g = rm.modified_objective(f, 0.2, scheme, S2)
    nohess = ObjectiveFn(f.value, f.ambient_gradient)
    g_fd = rm.modified_objective(nohess, 0.2, scheme, S2)
    x = S2.random_point(4)
    rg = S2.project(x, g.ambient_gradient(x))
    np.testing.assert_allclose(rg, S2.project(x, g_fd.ambient_gradient(x)), atol=1e-8)
    v = tangent(x, 9)
    t = 1e-6
    dd = (g.value(S2.exp(x, t * v)) - g.value(S2.exp(x, -t * v))) / (2 * t)
    assert np.dot(rg, v) == pytest.approx(dd, rel=1e-6)


def test_modified_flow_quadratic_closed_form():
    traj = rm.modified_flow(Euclidean(1), rm.quadratic_objective([2.0]), np.array([1.0]), 0.1, "forward", 1.0, 100)
    assert traj.shape == (101, 1)
    assert traj[-1, 0] == pytest.approx(math.exp(-(2.0 + 0.05 * 4.0)), rel=1e-7)


def test_modified_flow_stays_on_sphere():
    traj = rm.modified_flow(S2, rm.sphere_test_objective(), S2.random_point(2), 0.1, "backward", 2.0, 64)
    np.testing.assert_allclose(np.linalg.norm(traj, axis=1), 1.0, atol=1e-14)


def test_scheme_name_checked():
    with pytest.raises(ValueError):
        rm.effective_hessian(np.eye(1), 0.1, "midpoint")


# order experiment ---------------------------------------------------------------


def test_order_experiment_rows_and_validation(tmp_path):
    etas = [0.125, 0.0625, 0.03125]
    rows = rm.order_match_experiment(Euclidean(1), rm.quadratic_objective([1.0]), np.array([1.0]), etas, "forward")
    assert [r.eta for r in rows] == etas
    ratios = [a.err_modified / b.err_modified for a, b in zip(rows, rows[1:])]
    assert all(3.0 < r < 5.0 for r in ratios)
    rm.write_order_csv(rows, tmp_path / "o.csv")
    assert (tmp_path / "o.csv").read_text().startswith("eta,err_plain,err_modified\n")
    with pytest.raises(ValueError):
        rm.order_match_experiment(Euclidean(1), rm.quadratic_objective([1.0]), np.array([1.0]), [0.1, 0.2, 0.05], "forward")
    with pytest.raises(ValueError):
        rm.order_match_experiment(Euclidean(1), rm.quadratic_objective([1.0]), np.array([1.0]), [0.1, -0.05], "forward")
