"""Gradient descent on Euclidean space and the unit sphere, and its modified flows.

Explicit (exponential-map) and implicit (proximal) gradient steps are
compared with the gradient flow of ``E`` and with the gradient flow of the
modified objective ``E + (eta/4)|grad E|^2`` (explicit) or
``E - (eta/4)|grad E|^2`` (implicit). The modified flow tracks the iterates
to second order in ``eta``; the plain flow only to first order.

Points and tangent vectors are ambient numpy arrays. Sphere points have unit
norm and tangent vectors at ``x`` are orthogonal to ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import SplitMix64

UNIT_TOL = 1e-10
DRIFT_TOL = 1e-12
GRADIENT_CHECK_TOL = 1e-5
BACKWARD_TOL = 1e-12
BACKWARD_MAX_ITER = 1000
FALLBACK_STEP = 1e-5


class InjectivityError(ValueError):
    """Raised when a step leaves the injectivity radius of the exponential map."""


class ProximalConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"proximal step did not converge in {iterations} iterations (stationarity residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


class Euclidean:
    """Flat space ``R^d``."""

    injectivity_radius = math.inf

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = dim

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x

    def normalize(self, x):
        return np.asarray(x, dtype=float)

    def project(self, x, v):
        return np.asarray(v, dtype=float)

    def exp(self, x, v):
        return np.asarray(x, dtype=float) + v

    def log(self, x, y):
        return np.asarray(y, dtype=float) - x

    def dist(self, x, y) -> float:
        return float(np.linalg.norm(np.asarray(y) - x))

    def transport(self, x, y, v):
        return np.asarray(v, dtype=float)

    def hessian_vector(self, x, egrad, ehess, xi):
        return ehess @ xi

    def random_point(self, seed: int) -> np.ndarray:
        return SplitMix64(seed).standard_normal(self.dim)


class Sphere:
    """Unit sphere in ``R^dim`` (``dim = 3`` is the 2-sphere)."""

    injectivity_radius = math.pi

    def __init__(self, dim: int = 3):
        if dim < 2:
            raise ValueError("ambient dimension must be >= 2")
        self.dim = dim

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
            raise ValueError(f"point is off the unit sphere (norm {np.linalg.norm(x):.15g})")
        return x

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x)

    def project(self, x, v):
        v = np.asarray(v, dtype=float)
        return v - np.dot(x, v) * x

    def exp(self, x, v):
        t = float(np.linalg.norm(v))
        if t == 0.0:
            return np.array(x, dtype=float)
        return math.cos(t) * x + math.sin(t) * (v / t)

    def log(self, x, y):
        u = y - np.dot(x, y) * x
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            if np.dot(x, y) < 0:
                raise InjectivityError("antipodal points have no unique logarithm")
            return np.zeros_like(np.asarray(x, dtype=float))
        theta = math.atan2(nu, float(np.dot(x, y)))
        return theta * u / nu

    def dist(self, x, y) -> float:
        nu = float(np.linalg.norm(y - np.dot(x, y) * x))
        return math.atan2(nu, float(np.dot(x, y)))

    def transport(self, x, y, v):
        """Parallel transport of ``v`` from ``x`` to ``y`` along the minimizing geodesic."""
        w = self.log(x, y)
        theta = float(np.linalg.norm(w))
        if theta == 0.0:
            return np.array(v, dtype=float)
        e = w / theta
        ev = float(np.dot(e, v))
        return v + (math.cos(theta) - 1.0) * ev * e - math.sin(theta) * ev * x

    def hessian_vector(self, x, egrad, ehess, xi):
        """Riemannian Hessian from ambient derivatives: ``P(ehess xi) - <x, egrad> xi``."""
        return self.project(x, ehess @ xi) - float(np.dot(x, egrad)) * xi

    def random_point(self, seed: int) -> np.ndarray:
        return self.normalize(SplitMix64(seed).standard_normal(self.dim))


Manifold = Euclidean | Sphere


@dataclass(frozen=True)
class ObjectiveFn:
    """Objective with ambient gradient and optional ambient Hessian.

    When ``probes`` are given, the gradient is compared with central
    differences of ``value`` at each probe on construction.
    """

    value: Callable[[np.ndarray], float]
    ambient_gradient: Callable[[np.ndarray], np.ndarray]
    ambient_hessian: Callable[[np.ndarray], np.ndarray] | None = None
    probes: np.ndarray | None = None

    def __post_init__(self):
        if self.probes is None:
            return
        for p in np.atleast_2d(self.probes):
            err, scale = gradient_check(self, p)
            if err > GRADIENT_CHECK_TOL * max(1.0, scale):
                raise ValueError(
                    f"ambient gradient disagrees with finite differences at {p} (error {err:.3e})"
                )


def gradient_check(f: ObjectiveFn, x, step: float = 1e-6) -> tuple[float, float]:
    """Max-norm gap between the gradient and central differences, and the gradient's size."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(f.ambient_gradient(x), dtype=float)
    fd = np.empty_like(g)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * step)
    return float(np.max(np.abs(fd - g))), float(np.max(np.abs(g)))


def riemannian_gradient(m, f: ObjectiveFn, x) -> np.ndarray:
    return m.project(x, f.ambient_gradient(x))


def forward_euler_step(m, f: ObjectiveFn, x, eta: float) -> np.ndarray:
    """``exp_x(-eta grad E(x))``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = m.check_point(x)
    v = -eta * riemannian_gradient(m, f, x)
    size = float(np.linalg.norm(v))
    if size >= m.injectivity_radius:
        raise InjectivityError(f"step length {size:.6g} exceeds the injectivity radius {m.injectivity_radius:.6g}")
    y = m.exp(x, v)
    if isinstance(m, Sphere):
        drift = abs(float(np.linalg.norm(y)) - 1.0)
        if drift > DRIFT_TOL:
            raise FloatingPointError(f"exponential map drifted off the sphere by {drift:.3e}")
        y = m.normalize(y)
    return y


def stationarity_residual(m, f: ObjectiveFn, x, y, eta: float) -> float:
    """Optimality gap ``|log_y(x) - eta grad E(y)|`` of a proximal step from ``x`` to ``y``."""
    return float(np.linalg.norm(m.log(y, x) - eta * riemannian_gradient(m, f, y)))


def backward_euler_step(
    m,
    f: ObjectiveFn,
    x,
    eta: float,
    tol: float = BACKWARD_TOL,
    max_iter: int = BACKWARD_MAX_ITER,
    return_info: bool = False,
):
    """Proximal step ``argmin_y E(y) + d(x, y)^2 / (2 eta)``.

    Solves ``log_y(x) = eta grad E(y)`` by the fixed-point map
    ``y <- exp_x(-eta Gamma_{y -> x} grad E(y))`` started from the explicit
    step. A candidate that does not reduce the stationarity residual is
    pulled back toward the current iterate along the geodesic (halving the
    step up to 30 times).
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = m.check_point(x)
    y = forward_euler_step(m, f, x, eta)
    res = stationarity_residual(m, f, x, y, eta)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ProximalConvergenceError(res, it)
        g = riemannian_gradient(m, f, y)
        cand = m.normalize(m.exp(x, -eta * m.transport(y, x, g)))
        cres = stationarity_residual(m, f, x, cand, eta)
        alpha = 1.0
        while cres >= res and alpha > 2.0**-30:
            alpha *= 0.5
            trial = m.normalize(m.exp(y, alpha * m.log(y, cand)))
            tres = stationarity_residual(m, f, x, trial, eta)
            if tres < res:
                cand, cres = trial, tres
                break
        if cres >= res:
            # no progress is possible at working precision
            if res <= 10.0 * tol:
                break
            raise ProximalConvergenceError(res, it)
        y, res = cand, cres
        it += 1
    if return_info:
        return y, {"iterations": it, "residual": res}
    return y


def _scheme_sign(scheme: str) -> float:
    if scheme == "forward":
        return 1.0
    if scheme == "backward":
        return -1.0
    raise ValueError(f"scheme must be 'forward' or 'backward', got {scheme!r}")


def modified_objective(f: ObjectiveFn, eta: float, scheme: str, manifold=None) -> ObjectiveFn:
    """``E +/- (eta/4)|grad_g E|^2`` (``+`` forward, ``-`` backward).

    The returned ambient gradient is ``grad E +/- (eta/2) Hess_g E[grad_g E]``,
    whose tangential part is the Riemannian gradient of the modified
    objective. Without an ambient Hessian, the correction is the projected
    central-difference gradient (step ``1e-5``) of ``|grad_g E|^2``.
    """
    m = manifold if manifold is not None else Euclidean(1)
    sign = _scheme_sign(scheme)
    if eta == 0:
        return ObjectiveFn(f.value, f.ambient_gradient, f.ambient_hessian)

    def base_point(x):
        return m.normalize(x) if isinstance(m, Sphere) else np.asarray(x, dtype=float)

    def sq_grad(x):
        xh = base_point(x)
        g = m.project(xh, f.ambient_gradient(x))
        return float(np.dot(g, g))

    def value(x):
        return f.value(x) + sign * 0.25 * eta * sq_grad(x)

    if f.ambient_hessian is not None:

        def correction(x):
            xh = base_point(x)
            eg = np.asarray(f.ambient_gradient(x), dtype=float)
            rg = m.project(xh, eg)
            return 0.5 * eta * m.hessian_vector(xh, eg, np.asarray(f.ambient_hessian(x)), rg)

    else:

        def correction(x):
            x = np.asarray(x, dtype=float)
            xh = base_point(x)
            dq = np.empty_like(x)
            for i in range(x.size):
                e = np.zeros_like(x)
                e[i] = FALLBACK_STEP
                dq[i] = (sq_grad(x + e) - sq_grad(x - e)) / (2.0 * FALLBACK_STEP)
            return 0.25 * eta * m.project(xh, dq)

    def gradient(x):
        return np.asarray(f.ambient_gradient(x), dtype=float) + sign * correction(x)

    return ObjectiveFn(value, gradient, None)


def effective_hessian(h, eta: float, scheme: str) -> np.ndarray:
    """Hessian of the modified objective at a nondegenerate minimum with Hessian ``h``.

    ``E + s (eta/4)|grad E|^2`` with ``grad E = h n`` gives ``h + s (eta/2) h^2``.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    return h + _scheme_sign(scheme) * 0.5 * eta * h @ h


def _rk4_step(field, x, dt):
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def modified_flow(m, f: ObjectiveFn, x0, eta: float, scheme: str, t_end: float, n_steps: int) -> np.ndarray:
    """RK4 trajectory of ``x' = -grad_g E^eta(x)``; returns ``n_steps + 1`` points.

    On the sphere the vector field is evaluated at the normalized stage point
    (it is tangent there, so the ambient flow preserves the norm exactly) and
    the point is renormalized after every step.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.array(m.check_point(x0), dtype=float)
    g = modified_objective(f, eta, scheme, m) if eta else f
    sphere = isinstance(m, Sphere)

    def field(z):
        zh = m.normalize(z) if sphere else z
        return -m.project(zh, g.ambient_gradient(zh))

    dt = t_end / n_steps
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for k in range(n_steps):
        x = _rk4_step(field, x, dt)
        if sphere:
            x = m.normalize(x)
        out[k + 1] = x
    return out


@dataclass(frozen=True)
class OrderRow:
    eta: float
    err_plain: float
    err_modified: float


def gd_iterates(m, f: ObjectiveFn, x0, eta: float, n_iter: int, scheme: str) -> np.ndarray:
    step = forward_euler_step if _scheme_sign(scheme) > 0 else backward_euler_step
    out = np.empty((n_iter + 1, np.size(x0)))
    x = np.array(x0, dtype=float)
    out[0] = x
    for k in range(n_iter):
        x = step(m, f, x, eta)
        out[k + 1] = x
    return out


def order_match_experiment(
    m,
    f: ObjectiveFn,
    x0,
    etas: Sequence[float],
    scheme: str,
    t_final: float = 1.0,
    substeps: int = 32,
) -> list[OrderRow]:
    """Sup over checkpoints ``t = k eta`` of the distance from GD iterates to both flows.

    Runs ``ceil(t_final / eta)`` GD steps; each flow is integrated with
    ``substeps`` RK4 steps per interval of length ``eta``.
    """
    etas = [float(e) for e in etas]
    if not etas:
        raise ValueError("eta list is empty")
    if any(e <= 0 for e in etas):
        raise ValueError("eta values must be positive")
    if any(a <= b for a, b in zip(etas, etas[1:])):
        raise ValueError("eta values must be strictly descending")
    _scheme_sign(scheme)
    rows = []
    for eta in etas:
        k = int(math.ceil(t_final / eta - 1e-12))
        gd = gd_iterates(m, f, x0, eta, k, scheme)
        plain = modified_flow(m, f, x0, 0.0, scheme, k * eta, k * substeps)[::substeps]
        mod = modified_flow(m, f, x0, eta, scheme, k * eta, k * substeps)[::substeps]
        ep = max(m.dist(a, b) for a, b in zip(gd, plain))
        em = max(m.dist(a, b) for a, b in zip(gd, mod))
        rows.append(OrderRow(eta, ep, em))
    return rows


def write_order_csv(rows: Sequence[OrderRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("eta,err_plain,err_modified\n")
        for r in rows:
            fh.write(f"{r.eta:.10g},{r.err_plain:.10e},{r.err_modified:.10e}\n")


# ---------------------------------------------------------------------------
# objectives used by the experiments


def quadratic_objective(hdiag: Sequence[float]) -> ObjectiveFn:
    """``x^T H x / 2`` with diagonal ``H``."""
    h = np.asarray(hdiag, dtype=float)
    return ObjectiveFn(
        lambda x: 0.5 * float(np.dot(h * x, x)),
        lambda x: h * np.asarray(x, dtype=float),
        lambda x: np.diag(h),
    )


def quartic_objective() -> ObjectiveFn:
    """``x^4 / 4`` in one dimension."""
    return ObjectiveFn(
        lambda x: 0.25 * float(x[0]) ** 4,
        lambda x: np.array([float(x[0]) ** 3]),
        lambda x: np.array([[3.0 * float(x[0]) ** 2]]),
    )


def sphere_test_objective(a: float = 0.3) -> ObjectiveFn:
    """``<x, e_z> + a <x, e_x>^2`` on the 2-sphere."""
    return ObjectiveFn(
        lambda x: float(x[2]) + a * float(x[0]) ** 2,
        lambda x: np.array([2.0 * a * x[0], 0.0, 1.0]),
        lambda x: np.diag([2.0 * a, 0.0, 0.0]),
    )
