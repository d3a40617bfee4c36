"""Small dense symmetric linear algebra (d <= 16).

Eigendecomposition is done with cyclic Jacobi rotations; the matrix square
root, inverse and inverse square root are spectral functions built on top of
it. Matrices are plain ``(d, d)`` float arrays.
"""

from __future__ import annotations

import math

import numpy as np

MAX_DIM = 16
SPD_FLOOR = 1e-12
SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-13
MAX_SWEEPS = 64


class MatrixDomainError(ValueError):
    """Raised when a matrix is not symmetric or not positive definite."""


class EigenConvergenceError(RuntimeError):
    """Raised when the Jacobi iteration exhausts its sweep budget."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


def symmetrize(m) -> np.ndarray:
    """Validate a square symmetric matrix and return ``(m + m.T) / 2``."""
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise MatrixDomainError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise MatrixDomainError(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise MatrixDomainError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    asym = float(np.abs(a - a.T).max())
    if asym > SYMMETRY_TOL * scale:
        raise MatrixDomainError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (a + a.T)


def _off_norm(a: np.ndarray) -> float:
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def sym_eigen(m, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    m : array_like, shape (d, d)
        Symmetric matrix.
    tol : float
        Convergence when the off-diagonal Frobenius norm drops below
        ``tol * ||m||_F``.
    max_sweeps : int
        Sweep budget before :class:`EigenConvergenceError` is raised.

    Returns
    -------
    w : ndarray, shape (d,)
        Eigenvalues in ascending order.
    q : ndarray, shape (d, d)
        Orthonormal eigenvectors stored column-wise, ``m = q @ diag(w) @ q.T``.
    """
    a = symmetrize(m)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * float(np.linalg.norm(a))
    off = _off_norm(a)
    sweeps = 0
    while off > threshold:
        if sweeps >= max_sweeps:
            raise EigenConvergenceError(off, sweeps)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
        off = _off_norm(a)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _spd_eigen(m):
    w, q = sym_eigen(m)
    bad = w[w <= SPD_FLOOR]
    if bad.size:
        raise MatrixDomainError(
            f"matrix is not positive definite: eigenvalue {bad[0]:.6e} <= {SPD_FLOOR:g}"
        )
    return w, q


def spd_function(m, fn) -> np.ndarray:
    """Apply a scalar function to the spectrum of an SPD matrix."""
    w, q = _spd_eigen(m)
    r = (q * fn(w)) @ q.T
    return 0.5 * (r + r.T)


def spd_sqrt(m) -> np.ndarray:
    """Principal square root of an SPD matrix."""
    return spd_function(m, np.sqrt)


def spd_inverse(m) -> np.ndarray:
    """Inverse of an SPD matrix."""
    return spd_function(m, np.reciprocal)


def spd_inv_sqrt(m) -> np.ndarray:
    """Inverse principal square root of an SPD matrix."""
    return spd_function(m, lambda w: 1.0 / np.sqrt(w))


def is_spd(m) -> bool:
    try:
        _spd_eigen(m)
    except MatrixDomainError:
        return False
    return True
