import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from jkoflow.matcore import (
    EigenConvergenceError,
    MatrixDomainError,
    is_spd,
    spd_inv_sqrt,
    spd_inverse,
    spd_sqrt,
    sym_eigen,
)


def random_spd(seed, d, floor=0.1):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d))
    return m @ m.T + floor * np.eye(d)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 6))
def test_eigenvalues_match_lapack(seed, d):
    a = np.random.default_rng(seed).standard_normal((d, d))
    a = a + a.T
    w, q = sym_eigen(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-12 * max(1.0, np.abs(a).max()))
    np.testing.assert_allclose(q @ np.diag(w) @ q.T, a, atol=1e-11 * max(1.0, np.abs(a).max()))
    np.testing.assert_allclose(q.T @ q, np.eye(d), atol=1e-12)


def test_eigenvalues_ascending():
    w, _ = sym_eigen(np.diag([3.0, -1.0, 2.0]))
    assert list(w) == [-1.0, 2.0, 3.0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 5))
def test_sqrt_and_inverse_match_scipy(seed, d):
    p = random_spd(seed, d)
    np.testing.assert_allclose(spd_sqrt(p), scipy.linalg.sqrtm(p).real, rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(spd_inverse(p), np.linalg.inv(p), rtol=1e-8, atol=1e-10)
    r = spd_inv_sqrt(p)
    np.testing.assert_allclose(r @ p @ r, np.eye(d), atol=1e-9)


def test_sqrt_is_symmetric_and_squares_back():
    p = random_spd(3, 4)
    s = spd_sqrt(p)
    assert np.array_equal(s, s.T)
    np.testing.assert_allclose(s @ s, p, rtol=1e-12, atol=1e-12)


def test_domain_errors():
    with pytest.raises(MatrixDomainError):
        spd_sqrt(np.diag([1.0, -1e-3]))
    with pytest.raises(MatrixDomainError):
        sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(MatrixDomainError):
        sym_eigen(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    assert not is_spd(np.diag([1.0, 0.0]))
    assert is_spd(np.eye(3))


def test_sweep_budget_is_enforced():
    a = np.random.default_rng(0).standard_normal((6, 6))
    with pytest.raises(EigenConvergenceError):
        sym_eigen(a + a.T, max_sweeps=1)
