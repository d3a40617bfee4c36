"""Exactly solvable Langevin dynamics on Gaussians (Bures-Wasserstein space).

For the linear Fokker-Planck equation ``dX = A X dt + sqrt(2/beta) dB`` with
symmetric Hurwitz drift ``A``, Gaussian laws stay Gaussian and the
Wasserstein gradient flow reduces to an ODE on ``(mean, cov)``. The JKO step
is known in closed form, which makes this the one setting where the
second-order modified flow can be compared against exact JKO iterates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .matcore import (
    MatrixDomainError,
    SPD_FLOOR,
    spd_inv_sqrt,
    spd_inverse,
    spd_sqrt,
    sym_eigen,
    symmetrize,
)
from .rng import SplitMix64, orthogonal_matrix

ERROR_CSV_HEADER = (
    "eta",
    "w2_vanilla",
    "w2_modified",
    "mean_err_vanilla",
    "mean_err_modified",
    "cov_err_vanilla",
    "cov_err_modified",
)


@dataclass(frozen=True)
class GaussianState:
    """A Gaussian N(mean, cov) with SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = symmetrize(np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        w, _ = sym_eigen(cov)
        if w[0] <= SPD_FLOOR:
            raise MatrixDomainError(f"covariance is not SPD: eigenvalue {w[0]:.6e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class LinearFokkerPlanck:
    """Symmetric negative-definite drift ``A`` and inverse temperature ``beta``."""

    drift: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        a = symmetrize(np.atleast_2d(np.asarray(self.drift, dtype=float)))
        w, _ = sym_eigen(a)
        if w[-1] >= -SPD_FLOOR:
            raise MatrixDomainError(f"drift is not negative definite: eigenvalue {w[-1]:.6e}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "drift", a)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def dim(self) -> int:
        return self.drift.shape[0]


def bures_w2(a: GaussianState, b: GaussianState) -> float:
    """W2 distance between two Gaussians (Bures formula)."""
    ra = spd_sqrt(a.cov)
    cross = spd_sqrt(ra @ b.cov @ ra)
    sq = float(np.sum((a.mean - b.mean) ** 2) + np.trace(a.cov + b.cov - 2.0 * cross))
    return float(np.sqrt(max(sq, 0.0)))


def _lyapunov(mean, cov, a, beta):
    dmean = a @ mean
    dcov = a @ cov + cov @ a + (2.0 / beta) * np.eye(a.shape[0])
    return dmean, 0.5 * (dcov + dcov.T)


def _correction(mean, cov, a, beta):
    # eta-coefficient of the JKO-flow velocity:
    #   mean: A^2 mu / 2,   cov: (A^2 S + S A^2) / 2 - S^{-1} / beta^2
    a2 = a @ a
    cmean = 0.5 * (a2 @ mean)
    ccov = 0.5 * (a2 @ cov + cov @ a2) - spd_inverse(cov) / beta**2
    return cmean, 0.5 * (ccov + ccov.T)


def lyapunov_rhs(s: GaussianState, sys: LinearFokkerPlanck):
    """Right-hand side of the mean/covariance gradient-flow ODE."""
    return _lyapunov(s.mean, s.cov, sys.drift, sys.beta)


def correction_rhs(s: GaussianState, sys: LinearFokkerPlanck):
    """Order-eta coefficient of the JKO-flow velocity in (mean, cov)."""
    return _correction(s.mean, s.cov, sys.drift, sys.beta)


def corrected_rhs(s: GaussianState, sys: LinearFokkerPlanck, eta: float):
    """Right-hand side of the JKO-Flow: gradient flow plus eta times the correction."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    dmean, dcov = lyapunov_rhs(s, sys)
    if eta == 0:
        return dmean, dcov
    cmean, ccov = correction_rhs(s, sys)
    return dmean + eta * cmean, dcov + eta * ccov


def jko_analytic_step(s: GaussianState, sys: LinearFokkerPlanck, eta: float) -> GaussianState:
    """One exact JKO step of size ``eta`` for the linear Fokker-Planck energy.

    The mean update is ``(I - eta A)^{-1} mu``. For the covariance, with
    ``R = S^{-1/2}`` the inverse root of the current covariance ``S``,

        Z = beta/(2 eta) * (-I + (I + 4 eta/beta * R (I - eta A) R)^{1/2})

    solves ``(R S_next^{-1} R)^{1/2} = Z``, hence ``S_next = R Z^{-2} R``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    d = s.dim
    eye = np.eye(d)
    a, beta = sys.drift, sys.beta
    mean = np.linalg.solve(eye - eta * a, s.mean)
    r = spd_inv_sqrt(s.cov)
    inner = eye + (4.0 * eta / beta) * (r @ (eye - eta * a) @ r)
    z = (beta / (2.0 * eta)) * (spd_sqrt(0.5 * (inner + inner.T)) - eye)
    try:
        zinv = spd_inverse(z)
    except MatrixDomainError as exc:
        raise MatrixDomainError(f"JKO step lost positive definiteness at eta={eta}: {exc}") from exc
    cov = r @ zinv @ zinv @ r
    return GaussianState(mean, 0.5 * (cov + cov.T))


def jko_residual(prev: GaussianState, nxt: GaussianState, sys: LinearFokkerPlanck, eta: float) -> float:
    """Frobenius residual of the covariance fixed-point relation for a JKO step."""
    d = prev.dim
    eye = np.eye(d)
    r = spd_inv_sqrt(prev.cov)
    lhs_inner = r @ spd_inverse(nxt.cov) @ r
    lhs = spd_sqrt(0.5 * (lhs_inner + lhs_inner.T))
    inner = eye + (4.0 * eta / sys.beta) * (r @ (eye - eta * sys.drift) @ r)
    rhs = (sys.beta / (2.0 * eta)) * (spd_sqrt(0.5 * (inner + inner.T)) - eye)
    return float(np.linalg.norm(lhs - rhs))


def rk4_integrate(
    s0: GaussianState,
    sys: LinearFokkerPlanck,
    t_end: float,
    n_steps: int,
    eta: float = 0.0,
) -> GaussianState:
    """Classical RK4 on the (mean, cov) ODE.

    ``eta = 0`` integrates the plain gradient flow; ``eta > 0`` the JKO-Flow.
    The covariance is re-symmetrized at every stage.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if t_end == 0:
        return s0
    a, beta = sys.drift, sys.beta
    dt = t_end / n_steps

    def rhs(m, c):
        dm, dc = _lyapunov(m, c, a, beta)
        if eta:
            cm, cc = _correction(m, c, a, beta)
            dm, dc = dm + eta * cm, dc + eta * cc
        return dm, dc

    def sym(c):
        return 0.5 * (c + c.T)

    m, c = s0.mean.copy(), s0.cov.copy()
    for step in range(n_steps):
        try:
            k1m, k1c = rhs(m, c)
            k2m, k2c = rhs(m + 0.5 * dt * k1m, sym(c + 0.5 * dt * k1c))
            k3m, k3c = rhs(m + 0.5 * dt * k2m, sym(c + 0.5 * dt * k2c))
            k4m, k4c = rhs(m + dt * k3m, sym(c + dt * k3c))
        except MatrixDomainError as exc:
            raise MatrixDomainError(f"covariance left the SPD cone at RK4 step {step}: {exc}") from exc
        m = m + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
        c = sym(c + dt / 6.0 * (k1c + 2 * k2c + 2 * k3c + k4c))
    try:
        return GaussianState(m, c)
    except MatrixDomainError as exc:
        raise MatrixDomainError(f"covariance left the SPD cone at RK4 step {n_steps - 1}: {exc}") from exc


def random_instance(
    seed: int,
    dim: int = 3,
    spectrum: Sequence[float] = (-0.2, -0.6, -1.2),
    eps: float = 0.5,
    beta: float = 1.0,
):
    """Seeded test problem: rotated drift spectrum, ``P0 = M M^T + eps I``, standard normal mean.

    Returns ``(sys, s0)``.
    """
    if len(spectrum) != dim:
        raise ValueError("spectrum length must equal dim")
    stream = SplitMix64(seed)
    q = orthogonal_matrix(stream, dim)
    a = q @ np.diag(np.asarray(spectrum, dtype=float)) @ q.T
    m = stream.standard_normal((dim, dim))
    p0 = m @ m.T + eps * np.eye(dim)
    mu0 = stream.standard_normal(dim)
    return LinearFokkerPlanck(0.5 * (a + a.T), beta), GaussianState(mu0, p0)


@dataclass(frozen=True)
class ErrorRow:
    eta: float
    w2_vanilla: float
    w2_modified: float
    mean_err_vanilla: float
    mean_err_modified: float
    cov_err_vanilla: float
    cov_err_modified: float

    def as_tuple(self):
        return tuple(getattr(self, k) for k in ERROR_CSV_HEADER)


def one_step_errors(sys: LinearFokkerPlanck, s0: GaussianState, eta: float, steps_per_eta: int = 200) -> ErrorRow:
    """Distance of both flows at ``t = eta`` to a single analytic JKO step."""
    jko = jko_analytic_step(s0, sys, eta)
    van = rk4_integrate(s0, sys, eta, steps_per_eta, eta=0.0)
    mod = rk4_integrate(s0, sys, eta, steps_per_eta, eta=eta)
    return ErrorRow(
        eta=eta,
        w2_vanilla=bures_w2(van, jko),
        w2_modified=bures_w2(mod, jko),
        mean_err_vanilla=float(np.linalg.norm(van.mean - jko.mean)),
        mean_err_modified=float(np.linalg.norm(mod.mean - jko.mean)),
        cov_err_vanilla=float(np.linalg.norm(van.cov - jko.cov)),
        cov_err_modified=float(np.linalg.norm(mod.cov - jko.cov)),
    )


def bw_error_scaling(
    sys: LinearFokkerPlanck,
    s0: GaussianState,
    etas: Iterable[float],
    steps_per_eta: int = 200,
) -> list[ErrorRow]:
    """Error table of vanilla and modified flows against one JKO step, per eta."""
    etas = [float(e) for e in etas]
    if not etas:
        raise ValueError("etas must be non-empty")
    if any(e <= 0 for e in etas):
        raise ValueError("every eta must be positive")
    if any(b > a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be in descending order")
    return [one_step_errors(sys, s0, e, steps_per_eta) for e in etas]


def write_error_csv(rows: Sequence[ErrorRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERROR_CSV_HEADER)
        for row in rows:
            w.writerow([f"{v:.5e}" for v in row.as_tuple()])


def _richardson(scaled, etas):
    """Value at ``h = 0`` of ``D(h) = c2 + h c3 + h^2 c4 + ...`` from three halved steps."""
    h0, h1, h2 = (float(e) for e in etas)
    if not (np.isclose(h1, h0 / 2) and np.isclose(h2, h1 / 2)):
        raise ValueError("Richardson extrapolation expects successively halved step sizes")
    d0, d1, d2 = (scaled(h) for h in (h0, h1, h2))
    r0, r1 = 2 * d1 - d0, 2 * d2 - d1
    return (4 * r1 - r0) / 3


def jko_second_order_coefficients(
    s: GaussianState,
    sys: LinearFokkerPlanck,
    etas: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    mean_etas: Sequence[float] = (2e-3, 1e-3, 5e-4),
):
    """Richardson estimate of the eta^2 excess of one JKO step over the gradient flow.

    Writes the JKO step as ``x + eta F(x) + eta^2 c2 + O(eta^3)`` and returns
    ``c2 - F'(x)[F(x)] / 2``, i.e. the part of the second-order coefficient
    that the plain gradient flow's own Taylor expansion does not account for.
    Each triple of step sizes must halve successively. The covariance step
    goes through a matrix square root whose round-off is amplified by
    ``1/eta^2``, so it uses larger steps than the mean, whose remainder is a
    plain geometric series and is truncation-limited instead.
    """
    fm, fc = lyapunov_rhs(s, sys)
    coef_m = _richardson(lambda h: (jko_analytic_step(s, sys, h).mean - s.mean - h * fm) / h**2, mean_etas)
    coef_c = _richardson(lambda h: (jko_analytic_step(s, sys, h).cov - s.cov - h * fc) / h**2, etas)
    a = sys.drift
    accel_m = a @ fm
    accel_c = a @ fc + fc @ a
    return coef_m - 0.5 * accel_m, 0.5 * ((coef_c - 0.5 * accel_c) + (coef_c - 0.5 * accel_c).T)
