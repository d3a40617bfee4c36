"""Deterministic particle transport for the Langevin free energy in 1D.

Particles follow ``x <- x + h v(x)`` where ``v`` is the velocity of the
Wasserstein flow on the (optionally JKO-modified) free energy
``int E rho + (1/beta) int rho log rho``. The density enters only through
its score ``d_x log rho``, estimated with a Gaussian kernel density
estimate. Derivatives of the score are central differences with stencil
``bandwidth / 4``.

Two score estimators are provided: :func:`kde_score` sums over all particles
(exact, ``O(N M)``), and :class:`BinnedKDE` bins many ensembles at once onto a
fine grid and convolves by FFT, which is what makes multi-seed sweeps cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sp_fft

from .grid1d import GridDensity1D, kl_to_target, normalized_log_density
from .rng import SplitMix64

MIN_PARTICLES = 16
SCORE_FLOOR = 1e-300
STENCIL_FRACTION = 0.25
BANDWIDTH_REFRESH = 50
MIN_SPREAD = 1e-3
TAIL_RELATIVE = 1e-10
GRID_SLACK = 0.25
REBUILD_MARGIN = 6.0


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).ravel()
        if x.size < MIN_PARTICLES:
            raise ValueError(f"need at least {MIN_PARTICLES} particles, got {x.size}")
        bad = np.nonzero(~np.isfinite(x))[0]
        if bad.size:
            raise ValueError(f"particle {bad[0]} has a non-finite position")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def mean(self) -> float:
        return float(self.positions.mean())

    def std(self) -> float:
        return float(self.positions.std())

    @classmethod
    def gaussian(cls, n: int, seed: int, mean: float = 0.0, std: float = 1.0) -> "ParticleEnsemble":
        return cls(mean + std * SplitMix64(seed).standard_normal(n))


@dataclass(frozen=True)
class Potential1D:
    """A potential with its first three derivatives."""

    value: Callable
    d1: Callable
    d2: Callable
    d3: Callable


def quartic_potential() -> Potential1D:
    """``E(x) = x^2/2 + x^4/4``."""
    return Potential1D(
        lambda x: 0.5 * x * x + 0.25 * (x * x) ** 2,
        lambda x: x + x * x * x,
        lambda x: 1.0 + 3.0 * x * x,
        lambda x: 6.0 * x,
    )


def quadratic_potential() -> Potential1D:
    """``E(x) = x^2/2``."""
    return Potential1D(
        lambda x: 0.5 * x * x,
        lambda x: np.asarray(x, dtype=float),
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    """``1.06 sigma N^(-1/5)`` along the last axis, with ``sigma`` floored at ``1e-3``."""
    x = np.asarray(x, dtype=float)
    sigma = np.maximum(x.std(axis=-1), MIN_SPREAD)
    return 1.06 * sigma * x.shape[-1] ** -0.2


def kde_score(ens: ParticleEnsemble, bandwidth: float, query, chunk: int = 2048) -> np.ndarray:
    """Score ``d_x log rho_hat`` of the Gaussian KDE at ``query``.

    The kernel sums are shifted by the nearest particle's exponent before
    exponentiating, so far queries return the score of the nearest kernel
    rather than ``0/0``; the (shifted) denominator is floored at ``1e-300``.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    q = np.atleast_1d(np.asarray(query, dtype=float))
    out = np.empty(q.shape, dtype=float)
    flat_q = q.ravel()
    flat_o = out.ravel()
    x = ens.positions
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    for start in range(0, flat_q.size, chunk):
        d = flat_q[start : start + chunk, None] - x[None, :]
        e = -d * d * inv
        k = np.exp(e - e.max(axis=1, keepdims=True))
        num = -(d * k).sum(axis=1) / bandwidth**2
        den = np.maximum(k.sum(axis=1), SCORE_FLOOR)
        flat_o[start : start + chunk] = num / den
    return out.reshape(np.shape(query)) if np.ndim(query) else out[0]


class KDEGrid:
    """Uniform binning grid with the cached Gaussian kernel spectrum per ensemble.

    The grid spans ``[lo, hi]`` with ``n_bins`` nodes; ``bandwidth`` holds one
    value per ensemble. Reusing a grid across steps avoids recomputing the
    spectrum while the bandwidth is frozen.
    """

    def __init__(self, lo: float, hi: float, bandwidth, n_bins: int = 2048):
        self.lo, self.hi, self.n_bins = float(lo), float(hi), int(n_bins)
        self.dx = (self.hi - self.lo) / (self.n_bins - 1)
        self.nodes = self.lo + self.dx * np.arange(self.n_bins)
        self.bandwidth = np.atleast_1d(np.asarray(bandwidth, dtype=float))
        # no zero padding: particles sit at least ``pad`` bandwidths inside the
        # grid, so circular wrap-around is below exp(-pad^2 / 2) relative
        self.fft_size = self.n_bins
        self.omega = 2.0 * np.pi * sp_fft.rfftfreq(self.fft_size, d=self.dx)
        self.spectrum = np.exp(-0.5 * (self.omega[None, :] * self.bandwidth[:, None]) ** 2)
        self.d_spectrum = self.spectrum * (1j * self.omega[None, :])

    @classmethod
    def covering(cls, positions, bandwidth, n_bins: int = 2048, pad: float = 8.0, slack: float = 0.0):
        x = np.atleast_2d(positions)
        b = float(np.max(bandwidth))
        return cls(float(x.min()) - pad * b - slack, float(x.max()) + pad * b + slack, bandwidth, n_bins)

    def contains(self, positions, margin: float) -> bool:
        return bool(positions.min() >= self.lo + margin and positions.max() <= self.hi - margin)


class BinnedKDE:
    """Gaussian KDE of ``S`` ensembles at once via linear binning and FFT.

    The kernel spectrum is the analytic Fourier transform of the Gaussian,
    so each build costs one forward and two inverse real FFTs per ensemble.

    Parameters
    ----------
    positions : ndarray, shape (S, N)
        One ensemble per row.
    bandwidth : ndarray, shape (S,), optional
        Kernel bandwidth per ensemble; Silverman's rule when omitted.
        Ignored when ``grid`` is given.
    n_bins : int
        Grid size; the grid spans all particles plus eight bandwidths.
    grid : KDEGrid, optional
        Precomputed grid that must contain every particle.
    """

    def __init__(self, positions, bandwidth=None, n_bins: int = 2048, grid: KDEGrid | None = None):
        x = np.atleast_2d(np.asarray(positions, dtype=float))
        s, n = x.shape
        if grid is None:
            b = silverman_bandwidth(x) if bandwidth is None else np.broadcast_to(np.asarray(bandwidth, dtype=float), (s,))
            grid = KDEGrid.covering(x, b, n_bins)
        if grid.bandwidth.size not in (1, s):
            raise ValueError("grid bandwidth does not match the number of ensembles")
        if not grid.contains(x, grid.dx):
            raise ValueError("particles fall outside the KDE grid")
        n_bins, dx, lo = grid.n_bins, grid.dx, grid.lo
        b = np.broadcast_to(grid.bandwidth, (s,))
        x_lo = x.min(axis=1, keepdims=True)
        x_hi = x.max(axis=1, keepdims=True)
        pos = (x - lo) / dx
        i0 = pos.astype(np.int64)  # pos > 0 inside the grid, so truncation is floor
        frac = pos - i0
        flat = (i0 + (np.arange(s) * n_bins)[:, None]).ravel()
        hist = np.bincount(flat, weights=(1.0 - frac).ravel(), minlength=s * n_bins)
        hist += np.bincount(flat + 1, weights=frac.ravel(), minlength=s * n_bins)
        hist = hist.reshape(s, n_bins) / (n * dx)

        fh = sp_fft.rfft(hist, n=grid.fft_size, axis=1)
        dens = sp_fft.irfft(fh * grid.spectrum, n=grid.fft_size, axis=1)[:, :n_bins]
        ddens = sp_fft.irfft(fh * grid.d_spectrum, n=grid.fft_size, axis=1)[:, :n_bins]
        self.lo, self.dx, self.n_bins = lo, dx, n_bins
        self.grid = grid.nodes
        self.bandwidth = np.array(b)
        self.density = np.maximum(dens, 0.0)
        score = ddens / np.maximum(dens, SCORE_FLOOR)
        # beyond the outermost particles the FFT output is round-off; use the
        # asymptotic score of the outermost kernel there
        b2 = (b * b)[:, None]
        noise = dens < TAIL_RELATIVE * dens.max(axis=1, keepdims=True)
        left = noise & (self.grid[None, :] < x_lo)
        right = noise & (self.grid[None, :] > x_hi)
        score = np.where(left, -(self.grid[None, :] - x_lo) / b2, score)
        score = np.where(right, -(self.grid[None, :] - x_hi) / b2, score)
        self.score_grid = score
        self._flat, self._frac = flat, frac

    def _interp(self, table: np.ndarray, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=float)
        pos = (q - self.lo) / self.dx
        i0 = np.clip(np.floor(pos).astype(np.int64), 0, self.n_bins - 2)
        frac = np.clip(pos - i0, 0.0, 1.0)
        return self._gather(table, i0, frac)

    @staticmethod
    def _gather(table, i0, frac):
        a = np.take_along_axis(table, i0, axis=1)
        c = np.take_along_axis(table, i0 + 1, axis=1)
        return a + frac * (c - a)

    def score(self, query) -> np.ndarray:
        """Score at ``query`` of shape ``(S, M)``, one row per ensemble."""
        return self._interp(self.score_grid, query)

    def pdf(self, query) -> np.ndarray:
        return self._interp(self.density, query)

    def at_particles(self, table: np.ndarray) -> np.ndarray:
        """Interpolate a grid table at the particles the estimate was built from."""
        t = np.ascontiguousarray(table).ravel()
        a = np.take(t, self._flat)
        c = np.take(t, self._flat + 1)
        return (a + self._frac.ravel() * (c - a)).reshape(self._frac.shape)

    def shifted_score(self, shift) -> np.ndarray:
        """Score at ``grid + shift`` (one shift per ensemble), linear interpolation, clamped at the ends."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.score_grid.shape[0],))
        out = np.empty_like(self.score_grid)
        m = self.n_bins
        for r, (row, d) in enumerate(zip(self.score_grid, shift)):
            u = d / self.dx
            k = int(math.floor(u))
            f = u - k
            padded = np.concatenate([np.full(abs(k) + 1, row[0]), row, np.full(abs(k) + 2, row[-1])])
            base = abs(k) + 1 + k
            a = padded[base : base + m]
            c = padded[base + 1 : base + 1 + m]
            out[r] = a + f * (c - a)
        return out

    def entropic_velocity(self, beta: float, eta: float, stencil) -> np.ndarray:
        """Score-dependent part of the velocity, tabulated on the grid.

        ``-s/beta - (eta / (2 beta^2)) (s s' + s'')`` with ``s'`` and ``s''``
        central differences of the interpolated score with the given stencil
        (one value per ensemble).
        """
        s0 = self.score_grid
        w = -s0 / beta
        if eta:
            d = np.broadcast_to(np.asarray(stencil, dtype=float), (s0.shape[0],))
            sp = self.shifted_score(d)
            sm = self.shifted_score(-d)
            d = d[:, None]
            w = w - 0.5 * eta / beta**2 * (s0 * (sp - sm) / (2.0 * d) + (sp - 2.0 * s0 + sm) / d**2)
        return w


def langevin_velocity(
    x: np.ndarray,
    potential: Potential1D,
    beta: float,
    eta: float,
    score: Callable[[np.ndarray], np.ndarray] | None,
    stencil: float,
) -> np.ndarray:
    """Velocity of the (modified) free-energy flow at particle positions.

    ``v = -(E' + s/beta) + (eta/4)(2 E' E'' - beta^-2 (s^2)') - (eta/(2 beta))(E''' + s''/beta)``
    with ``s`` the score. ``beta = inf`` skips the score entirely.
    """
    de = potential.d1(x)
    inv_beta = 0.0 if math.isinf(beta) else 1.0 / beta
    v = -de
    if inv_beta:
        s0 = score(x)
        v = v - inv_beta * s0
    if eta == 0:
        return v
    corr = 0.5 * eta * de * potential.d2(x) - 0.5 * eta * inv_beta * potential.d3(x)
    if inv_beta:
        sp = score(x + stencil)
        sm = score(x - stencil)
        ds = (sp - sm) / (2.0 * stencil)
        d2s = (sp - 2.0 * s0 + sm) / stencil**2
        corr = corr - 0.5 * eta * inv_beta**2 * s0 * ds - 0.5 * eta * inv_beta**2 * d2s
    return v + corr


def particle_step(
    ens: ParticleEnsemble,
    potential: Potential1D,
    beta: float,
    eta: float,
    h: float,
    bandwidth: float,
    stencil_fraction: float = STENCIL_FRACTION,
) -> ParticleEnsemble:
    """One explicit step ``x_i <- x_i + h v(x_i)`` with the exact KDE score."""
    x = ens.positions
    v = langevin_velocity(
        x, potential, beta, eta, lambda q: kde_score(ens, bandwidth, q), stencil_fraction * bandwidth
    )
    new = x + h * v
    bad = np.nonzero(~np.isfinite(new))[0]
    if bad.size:
        raise FloatingPointError(f"particle {bad[0]} left the reals during the step")
    return ParticleEnsemble(new)


def ensemble_kl(
    ens: ParticleEnsemble,
    log_pi_unnormalized: Callable,
    domain: tuple[float, float] = (-6.0, 6.0),
    bins: int = 512,
    bandwidth: float = 0.1,
) -> float:
    """KL of the Gaussian-KDE density of ``ens`` to ``pi``, both on a common grid."""
    if bins < 64:
        raise ValueError("bins must be >= 64")
    return float(batched_ensemble_kl(ens.positions[None, :], log_pi_unnormalized, domain, bins, bandwidth)[0])


def batched_ensemble_kl(
    positions: np.ndarray,
    log_pi_unnormalized: Callable,
    domain: tuple[float, float] = (-6.0, 6.0),
    bins: int = 512,
    bandwidth: float = 0.1,
    chunk: int = 8192,
) -> np.ndarray:
    """:func:`ensemble_kl` for each row of ``positions``."""
    lo, hi = domain
    grid = np.linspace(lo, hi, bins)
    log_pi = normalized_log_density(log_pi_unnormalized, lo, hi, bins)
    out = np.empty(positions.shape[0])
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * bandwidth)
    for r, row in enumerate(np.atleast_2d(positions)):
        dens = np.zeros(bins)
        for start in range(0, row.size, chunk):
            d = (grid[:, None] - row[None, start : start + chunk]) / bandwidth
            dens += np.exp(-0.5 * d * d).sum(axis=1)
        dens *= norm / row.size
        if not dens.max() > 0:
            dens = np.zeros(bins)
            dens[np.argmin(np.abs(grid - np.clip(row.mean(), lo, hi)))] = 1.0
        rho = GridDensity1D.from_values(lo, hi, dens)
        out[r] = kl_to_target(rho, log_pi)
    return out


@dataclass
class ParticleRun:
    final: np.ndarray
    steps: np.ndarray
    kl: np.ndarray


def run_particles_batched(
    x0: np.ndarray,
    potential: Potential1D,
    beta: float,
    eta: float,
    h: float,
    n_steps: int,
    log_pi_unnormalized: Callable | None = None,
    record_every: int = 0,
    refresh: int = BANDWIDTH_REFRESH,
    stencil_fraction: float = STENCIL_FRACTION,
    n_bins: int = 2048,
    kl_kwargs: dict | None = None,
) -> ParticleRun:
    """Transport ``S`` ensembles (rows of ``x0``) for ``n_steps`` steps.

    The score comes from :class:`BinnedKDE` with a Silverman bandwidth
    recomputed every ``refresh`` steps; the binning grid is rebuilt at each
    refresh or when a particle comes within six bandwidths of its edge. When ``record_every > 0`` the
    ensemble KL to ``pi`` is recorded at step 0 and every ``record_every``
    steps.
    """
    x = np.array(np.atleast_2d(x0), dtype=float)
    if x.shape[1] < MIN_PARTICLES:
        raise ValueError(f"need at least {MIN_PARTICLES} particles per ensemble")
    kl_kwargs = kl_kwargs or {}
    steps, kls = [], []

    def record(k):
        steps.append(k)
        kls.append(batched_ensemble_kl(x, log_pi_unnormalized, **kl_kwargs))

    if record_every:
        record(0)
    b = silverman_bandwidth(x)
    use_score = not math.isinf(beta)
    grid = None
    for k in range(n_steps):
        if k % refresh == 0:
            b = silverman_bandwidth(x)
            grid = None
        if use_score and (grid is None or not grid.contains(x, REBUILD_MARGIN * float(b.max()))):
            grid = KDEGrid.covering(x, b, n_bins, slack=GRID_SLACK)
        de = potential.d1(x)
        v = -de
        if eta:
            v = v + 0.5 * eta * de * potential.d2(x)
        if use_score:
            kde = BinnedKDE(x, grid=grid)
            if eta:
                v = v - 0.5 * eta / beta * potential.d3(x)
            v = v + kde.at_particles(kde.entropic_velocity(beta, eta, stencil_fraction * b))
        x = x + h * v
        if not np.all(np.isfinite(x)):
            row, col = np.argwhere(~np.isfinite(x))[0]
            raise FloatingPointError(f"particle {col} of ensemble {row} left the reals at step {k}")
        if record_every and (k + 1) % record_every == 0:
            record(k + 1)
    return ParticleRun(x, np.array(steps), np.array(kls).T if kls else np.empty((x.shape[0], 0)))


def initial_ensembles(seeds: Sequence[int], n: int) -> np.ndarray:
    """Standard-normal ensembles, one row per seed."""
    return np.stack([SplitMix64(int(s)).standard_normal(n) for s in seeds])


@dataclass(frozen=True)
class SweepRow:
    eta: float
    mean_kl: float
    std_kl: float
    median_kl: float
    n_seeds: int


def eta_sweep(
    etas: Sequence[float],
    seeds: Sequence[int],
    n_particles: int = 4000,
    h: float = 2e-3,
    n_steps: int = 2000,
    beta: float = 1.0,
    potential: Potential1D | None = None,
    log_pi_unnormalized: Callable | None = None,
    kl_kwargs: dict | None = None,
    n_bins: int = 2048,
):
    """Final ensemble KL for each ``eta``, every seed sharing its initial ensemble across ``eta``.

    Returns ``(rows, finals)`` where ``finals[eta]`` is the per-seed KL array.
    """
    potential = potential or quartic_potential()
    if log_pi_unnormalized is None:
        log_pi_unnormalized = lambda x: -(0.5 * x**2 + 0.25 * x**4)  # noqa: E731
    x0 = initial_ensembles(seeds, n_particles)
    rows, finals = [], {}
    for eta in etas:
        run = run_particles_batched(x0, potential, beta, eta, h, n_steps, n_bins=n_bins)
        kl = batched_ensemble_kl(run.final, log_pi_unnormalized, **(kl_kwargs or {}))
        finals[eta] = kl
        rows.append(SweepRow(float(eta), float(kl.mean()), float(kl.std()), float(np.median(kl)), len(seeds)))
    return rows, finals


def write_kl_csv(steps, kl, path) -> None:
    with open(path, "w") as fh:
        fh.write("step,kl\n")
        for s, v in zip(steps, kl):
            fh.write(f"{int(s)},{v:.10g}\n")


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("eta,mean_kl,std_kl,n_seeds\n")
        for r in rows:
            fh.write(f"{r.eta:.6g},{r.mean_kl:.10g},{r.std_kl:.10g},{r.n_seeds}\n")
