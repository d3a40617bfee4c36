"""One-dimensional densities on uniform grids.

Contains the grid density type and finite-difference helpers shared with
:mod:`jkoflow.energies`, the quartic-potential transport maps (one forward
Euler step on ``KL`` and on its JKO-modified energy), pushforward of a grid
density through a non-monotone map, and an upwind finite-volume solver for
the continuity equation ``d_t rho = -d_x(rho v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

DENSITY_FLOOR = 1e-300
MASS_TOL = 1e-8
MIN_NODES = 9

# jump detector defaults
JUMP_RATIO = 5.0
JUMP_WINDOW = 0.2


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def derivative(f: np.ndarray, dx: float) -> np.ndarray:
    """Centered second-order first derivative, one-sided second order at the ends."""
    return np.gradient(f, dx, edge_order=2)


def second_derivative(f: np.ndarray, dx: float) -> np.ndarray:
    """Three-point second derivative, one-sided second order at the ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / dx**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / dx**2
    return out


@dataclass(frozen=True)
class GridDensity1D:
    """Probability density sampled at ``n`` uniformly spaced nodes on ``[x_min, x_max]``.

    The trapezoidal integral of ``values`` must equal one to ``1e-8``.
    """

    x_min: float
    x_max: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < MIN_NODES:
            raise ValueError(f"need a 1D array with at least {MIN_NODES} nodes")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if not np.all(np.isfinite(v)):
            raise ValueError("density has non-finite values")
        if np.any(v < 0):
            raise ValueError(f"density is negative at node {int(np.argmin(v))}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        mass = self.mass()
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density is not normalized (mass {mass:.12g})")

    @classmethod
    def from_values(cls, x_min: float, x_max: float, values) -> "GridDensity1D":
        """Build a density from unnormalized non-negative values."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = float(np.dot(trapezoid_weights(v.size, (x_max - x_min) / (v.size - 1)), v))
        if not mass > 0:
            raise ValueError("values have zero mass")
        return cls(x_min, x_max, v / mass)

    @classmethod
    def from_pdf(cls, pdf: Callable, x_min: float = -8.0, x_max: float = 8.0, n: int = 2048):
        x = np.linspace(x_min, x_max, n)
        return cls.from_values(x_min, x_max, pdf(x))

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0, x_min=-8.0, x_max=8.0, n=2048):
        return cls.from_pdf(lambda x: np.exp(-0.5 * ((x - mean) / std) ** 2), x_min, x_max, n)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n, self.dx)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f))

    def mass(self) -> float:
        return self.integrate(self.values)

    def mean(self) -> float:
        return self.integrate(self.x * self.values)

    def variance(self) -> float:
        m = self.mean()
        return self.integrate((self.x - m) ** 2 * self.values)

    def log(self) -> np.ndarray:
        return np.log(np.maximum(self.values, DENSITY_FLOOR))

    def support_mask(self) -> np.ndarray:
        return self.values > DENSITY_FLOOR

    def same_grid(self, other: "GridDensity1D") -> bool:
        return self.n == other.n and self.x_min == other.x_min and self.x_max == other.x_max

    def with_values(self, values) -> "GridDensity1D":
        return GridDensity1D.from_values(self.x_min, self.x_max, values)

    def resample(self, x_min: float, x_max: float, n: int) -> "GridDensity1D":
        xs = np.linspace(x_min, x_max, n)
        return GridDensity1D.from_values(x_min, x_max, np.interp(xs, self.x, self.values, left=0.0, right=0.0))

    def l1_distance(self, other: "GridDensity1D") -> float:
        if not self.same_grid(other):
            raise ValueError("densities live on different grids")
        return self.integrate(np.abs(self.values - other.values))


def field_on(source, rho: GridDensity1D) -> np.ndarray:
    """Evaluate a scalar field given as a callable of ``x`` or as grid values."""
    if callable(source):
        out = np.asarray(source(rho.x), dtype=float)
    else:
        out = np.asarray(source, dtype=float)
    if out.shape != (rho.n,):
        out = np.broadcast_to(out, (rho.n,)).astype(float)
    return out


def kl_to_target(rho: GridDensity1D, log_pi) -> float:
    """``int rho (log rho - log pi)`` with ``log_pi`` normalized on the same grid."""
    lp = field_on(log_pi, rho)
    mask = rho.support_mask()
    integrand = np.zeros(rho.n)
    integrand[mask] = rho.values[mask] * (np.log(rho.values[mask]) - lp[mask])
    return rho.integrate(integrand)


def normalized_log_density(log_unnormalized, x_min: float, x_max: float, n: int) -> np.ndarray:
    """Log of a density normalized by trapezoidal quadrature on the given grid."""
    x = np.linspace(x_min, x_max, n)
    lu = np.asarray(log_unnormalized(x) if callable(log_unnormalized) else log_unnormalized, dtype=float)
    top = lu.max()
    z = float(np.dot(trapezoid_weights(n, (x_max - x_min) / (n - 1)), np.exp(lu - top)))
    return lu - top - math.log(z)


# ---------------------------------------------------------------------------
# transport maps


@dataclass(frozen=True)
class TransportMap1D:
    map: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.map(x)

    def consistency_error(self, points, step: float = 1e-5) -> float:
        """Max gap between ``derivative`` and central differences of ``map``."""
        x = np.asarray(points, dtype=float)
        fd = (self.map(x + step) - self.map(x - step)) / (2 * step)
        return float(np.max(np.abs(fd - self.derivative(x))))


IDENTITY_MAP = TransportMap1D(lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(np.asarray(x, dtype=float)))


def linear_map(scale: float, shift: float = 0.0) -> TransportMap1D:
    return TransportMap1D(lambda x: scale * np.asarray(x) + shift, lambda x: np.full_like(np.asarray(x, dtype=float), scale))


def quartic_maps(h: float, eta: float = 0.0) -> TransportMap1D:
    """One forward-Euler step of size ``h`` from N(0, 1) toward ``pi ~ exp(-x^2/2 - x^4/4)``.

    The first variation of ``KL(.|pi)`` at the standard Gaussian has
    derivative ``x^3``; the JKO-modified energy changes it to
    ``x^3 - (3 eta / 2) x^5``. The map is ``x - h`` times that derivative.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    c = 1.5 * eta

    def t(x):
        x = np.asarray(x, dtype=float)
        return x - h * (x**3 - c * x**5)

    def dt(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - h * (3.0 * x**2 - 5.0 * c * x**4)

    return TransportMap1D(t, dt)


def quartic_monotone_threshold(h: float) -> float:
    """Smallest eta for which the corrected quartic map is monotone (``3 h / 10``)."""
    return 0.3 * h


def quartic_min_derivative(h: float, eta: float) -> float:
    """Closed-form infimum of the corrected map's derivative over the real line."""
    if eta == 0:
        return -math.inf
    return 1.0 - 3.0 * h / (10.0 * eta)


@dataclass(frozen=True)
class MonotonicityResult:
    monotone: bool
    min_derivative: float
    argmin: float


def is_monotone(tmap: TransportMap1D, domain: tuple[float, float] = (-10.0, 10.0), samples: int = 20001) -> MonotonicityResult:
    """Check ``T' > -1e-12`` on ``domain`` by dense sampling plus local refinement.

    Every sampled local minimum of ``T'`` is polished with a bounded scalar
    minimization over its two neighbouring sample intervals, so a negative dip
    narrower than the sample spacing is still found.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    lo, hi = domain
    x = np.linspace(lo, hi, samples)
    d = tmap.derivative(x)
    cand = [0, samples - 1]
    interior = np.nonzero((d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:]))[0] + 1
    cand.extend(interior.tolist())
    best_val, best_x = float(d.min()), float(x[int(np.argmin(d))])
    for i in sorted(set(cand), key=lambda k: d[k])[:16]:
        a, b = x[max(i - 1, 0)], x[min(i + 1, samples - 1)]
        if b <= a:
            continue
        res = minimize_scalar(lambda s: float(tmap.derivative(np.array([s]))[0]), bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        if res.fun < best_val:
            best_val, best_x = float(res.fun), float(res.x)
    return MonotonicityResult(best_val > -1e-12, best_val, best_x)


# ---------------------------------------------------------------------------
# pushforward


@dataclass(frozen=True)
class PushforwardResult:
    density: GridDensity1D
    raw_values: np.ndarray
    raw_mass: float
    max_preimages: int


def pushforward(
    rho0: GridDensity1D,
    tmap: TransportMap1D,
    out_grid: tuple[float, float, int],
    scan_factor: int = 16,
    cap: float = 1e12,
    bisect_tol: float = 1e-12,
) -> PushforwardResult:
    """Density of ``T # rho0`` on ``out_grid = (y_min, y_max, n)``.

    For every output node ``y`` all preimages are bracketed by sign changes of
    ``T(x) - y`` on a scan of ``rho0``'s domain (spacing ``1/scan_factor`` of
    the output spacing), refined by bisection, and ``rho0(x) / |T'(x)|`` is
    summed over them with each term capped at ``cap``. The result is
    renormalized; the raw mass is reported alongside.
    """
    y_min, y_max, n_out = out_grid
    ys = np.linspace(y_min, y_max, n_out)
    dy = (y_max - y_min) / (n_out - 1)
    n_scan = max(int(math.ceil((rho0.x_max - rho0.x_min) / (dy / scan_factor))) + 1, 2)
    xs = np.linspace(rho0.x_min, rho0.x_max, n_scan)
    ts = tmap(xs)

    lo_t = np.minimum(ts[:-1], ts[1:])
    hi_t = np.maximum(ts[:-1], ts[1:])
    # node indices whose y falls inside each scan interval's image
    first = np.searchsorted(ys, lo_t, side="left")
    last = np.searchsorted(ys, hi_t, side="right")
    counts = np.maximum(last - first, 0)
    seg = np.repeat(np.arange(n_scan - 1), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    node = np.repeat(first, counts) + offs

    fa = ts[seg] - ys[node]
    fb = ts[seg + 1] - ys[node]
    # half-open bracket so a root sitting on a scan node is counted once
    keep = ((fa <= 0) & (fb > 0)) | ((fa > 0) & (fb <= 0))
    seg, node, fa = seg[keep], node[keep], fa[keep]

    a = xs[seg].copy()
    b = xs[seg + 1].copy()
    sa = np.sign(fa)
    y_t = ys[node]
    n_iter = int(math.ceil(math.log2(max((xs[1] - xs[0]) / bisect_tol, 2.0)))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        fm = tmap(mid) - y_t
        same = np.sign(fm) == sa
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    root = 0.5 * (a + b)

    r0 = np.interp(root, rho0.x, rho0.values, left=0.0, right=0.0)
    jac = np.abs(tmap.derivative(root))
    with np.errstate(divide="ignore"):
        contrib = np.where(jac > 0, r0 / jac, np.inf)
    contrib = np.minimum(contrib, cap)
    raw = np.bincount(node, weights=contrib, minlength=n_out)
    max_pre = int(np.bincount(node, minlength=n_out).max()) if node.size else 0
    raw_mass = float(np.dot(trapezoid_weights(n_out, dy), raw))
    return PushforwardResult(GridDensity1D.from_values(y_min, y_max, raw), raw, raw_mass, max_pre)


@dataclass(frozen=True)
class JumpReport:
    hit: bool
    max_ratio: float
    location: float


def detect_jump(
    rho: GridDensity1D,
    locations: Sequence[float],
    window: float = JUMP_WINDOW,
    ratio: float = JUMP_RATIO,
    rel_floor: float = 1e-8,
) -> JumpReport:
    """Flag a discontinuity: adjacent-node ratio above ``ratio`` within ``window`` of a location.

    Node pairs whose larger value is below ``rel_floor`` times the density
    maximum are ignored so that far tails cannot trigger the detector.
    """
    v = rho.values
    x = rho.x
    floor = rel_floor * float(v.max())
    best, where = 1.0, float("nan")
    for loc in locations:
        idx = np.nonzero(np.abs(x - loc) <= window)[0]
        if idx.size < 2:
            continue
        i0, i1 = idx[0], idx[-1]
        left, right = v[i0:i1], v[i0 + 1 : i1 + 1]
        big = np.maximum(left, right)
        small = np.minimum(left, right)
        ok = big > floor
        if not np.any(ok):
            continue
        with np.errstate(divide="ignore"):
            r = np.where(small[ok] > 0, big[ok] / small[ok], np.inf)
        k = int(np.argmax(r))
        if r[k] > best:
            best, where = float(r[k]), float(x[i0 + np.nonzero(ok)[0][k]])
    return JumpReport(best > ratio, best, where)


def quartic_jump_locations(h: float, eta: float) -> list[float]:
    """Predicted discontinuity locations ``y = T(x*)`` of one corrected quartic step.

    ``x*`` is the critical point of ``T`` nearest to the origin when the map
    folds; for a monotone map it is the point of minimal slope (where a fold
    would first appear). Locations come in symmetric pairs.
    """
    tmap = quartic_maps(h, eta)
    c = 1.5 * eta
    # T'(x) = 1 - 3h u + 5 h c u^2 with u = x^2
    if c == 0:
        u = 1.0 / (3.0 * h)
    else:
        disc = 9.0 * h * h - 20.0 * h * c
        if disc >= 0:
            u = (3.0 * h - math.sqrt(disc)) / (10.0 * h * c)
        else:
            u = 3.0 / (10.0 * c)
    xs = math.sqrt(u)
    y = float(tmap(np.array([xs]))[0])
    return [-y, y]


# ---------------------------------------------------------------------------
# continuity-equation solver


class CFLError(RuntimeError):
    def __init__(self, step: int, cfl: float, suggested_n_steps: int):
        super().__init__(
            f"CFL condition violated at step {step} (number {cfl:.3f} > 0.5); "
            f"try n_steps >= {suggested_n_steps}"
        )
        self.step = step
        self.cfl = cfl
        self.suggested_n_steps = suggested_n_steps


@dataclass
class Trajectory:
    times: np.ndarray
    densities: list
    clipped_mass: float = 0.0
    max_cfl: float = 0.0
    dt: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def final(self) -> GridDensity1D:
        return self.densities[-1]


def face_velocity_from_potential(psi: np.ndarray, dx: float) -> np.ndarray:
    """Face velocities ``-(psi_{i+1} - psi_i) / dx`` for a first variation ``psi`` on nodes."""
    return -np.diff(psi) / dx


def wgf_solve(
    rho0: GridDensity1D,
    velocity: Callable[[GridDensity1D], np.ndarray],
    t_end: float,
    n_steps: int,
    save_every: int = 1,
    cfl_max: float = 0.5,
    diffusivity: float = 0.0,
) -> Trajectory:
    """Integrate ``d_t rho = -d_x(rho v)`` with donor-cell fluxes and forward Euler in time.

    ``velocity`` returns either node values (length ``n``; faces take the
    mean of adjacent nodes) or face values (length ``n - 1``). Boundary faces
    carry zero flux and cells use trapezoid widths, so the trapezoidal mass is
    conserved exactly. ``diffusivity`` adds the parabolic limit
    ``2 D dt / dx^2`` to the admissibility number when the velocity hides a
    diffusion term (for instance ``-d_x log rho / beta``).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dt = t_end / n_steps
    dx = rho0.dx
    w = rho0.weights
    rho = rho0.values.copy()
    times = [0.0]
    dens = [rho0]
    clipped = 0.0
    max_cfl = 0.0
    current = rho0
    for step in range(n_steps):
        v = np.asarray(velocity(current), dtype=float)
        if v.size == rho.size:
            vf = 0.5 * (v[1:] + v[:-1])
        elif v.size == rho.size - 1:
            vf = v
        else:
            raise ValueError(f"velocity has {v.size} entries for {rho.size} nodes")
        cfl = float(np.max(np.abs(vf))) * dt / dx + 2.0 * diffusivity * dt / dx**2
        max_cfl = max(max_cfl, cfl)
        if not np.isfinite(cfl) or cfl > cfl_max:
            rate = cfl / dt if np.isfinite(cfl) else float("inf")
            suggested = int(math.ceil(rate * t_end / cfl_max)) if np.isfinite(rate) else -1
            raise CFLError(step, cfl, suggested)
        flux = np.maximum(vf, 0.0) * rho[:-1] + np.minimum(vf, 0.0) * rho[1:]
        div = np.zeros_like(rho)
        div[:-1] += flux
        div[1:] -= flux
        rho = rho - dt * div / w
        neg = rho < 0
        if np.any(neg):
            clipped += float(-np.dot(w[neg], rho[neg]))
            rho[neg] = 0.0
            rho /= float(np.dot(w, rho))
        current = GridDensity1D(rho0.x_min, rho0.x_max, rho / float(np.dot(w, rho)))
        rho = current.values.copy()
        if (step + 1) % save_every == 0 or step == n_steps - 1:
            times.append((step + 1) * dt)
            dens.append(current)
    return Trajectory(np.array(times), dens, clipped, max_cfl, dt, {"n_steps": n_steps, "t_end": t_end})


def write_density_csv(rho: GridDensity1D, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,value\n")
        for xi, vi in zip(rho.x, rho.values):
            fh.write(f"{xi:.10g},{vi:.10g}\n")


def write_trajectory_metadata(traj: Trajectory, path, extra: dict | None = None) -> None:
    items = {
        "n_steps": traj.metadata.get("n_steps"),
        "t_end": traj.metadata.get("t_end"),
        "dt": traj.dt,
        "clipped_mass": traj.clipped_mass,
        "max_cfl": traj.max_cfl,
        "cfl_margin": 0.5 - traj.max_cfl,
        "snapshots": len(traj.densities),
    }
    if extra:
        items.update(extra)
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v}\n")
