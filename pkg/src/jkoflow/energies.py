"""Energy functionals on one-dimensional grid densities.

Every functional exposes its value ``J(rho)``, its first variation
``dJ/drho`` with the spatial derivative (the Wasserstein gradient direction),
the squared metric slope ``int |d_x dJ/drho|^2 rho`` and, through
:func:`modified_energy`, the JKO-modified energy ``J - (eta/4) |dJ|^2``.

Nodes where the density is below :data:`DENSITY_FLOOR` are excluded from
logarithmic integrands (their ``rho log rho`` contribution is zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid1d import DENSITY_FLOOR, GridDensity1D, derivative, field_on, second_derivative

MAX_INTERACTION_NODES = 8192
EVEN_TOL = 1e-12


class DensityFloorError(ValueError):
    """Raised when a density vanishes where a strictly positive one is required."""


@dataclass(frozen=True)
class FirstVariationField:
    values: np.ndarray
    gradient: np.ndarray


def _log_density(rho: GridDensity1D, require_positive: bool = False) -> np.ndarray:
    if require_positive:
        low = np.nonzero(rho.values <= DENSITY_FLOOR)[0]
        if low.size:
            raise DensityFloorError(
                f"density at node {low[0]} (x = {rho.x[low[0]]:.6g}) is below the floor {DENSITY_FLOOR:g}"
            )
    return rho.log()


def _check_interior_support(rho: GridDensity1D) -> None:
    """Reject densities that vanish strictly inside their support."""
    pos = np.nonzero(rho.values > DENSITY_FLOOR)[0]
    if pos.size == 0:
        raise DensityFloorError("density vanishes on the whole grid")
    inner = rho.values[pos[0] : pos[-1] + 1]
    holes = np.nonzero(inner <= DENSITY_FLOOR)[0]
    if holes.size:
        i = pos[0] + holes[0]
        raise DensityFloorError(f"density is below the floor at interior node {i} (x = {rho.x[i]:.6g})")


def _xlogx(rho: GridDensity1D) -> np.ndarray:
    out = np.zeros(rho.n)
    m = rho.support_mask()
    out[m] = rho.values[m] * np.log(rho.values[m])
    return out


class EnergyFunctional:
    """Base class: subclasses implement ``evaluate`` and ``variation``."""

    def evaluate(self, rho: GridDensity1D) -> float:
        raise NotImplementedError

    def variation(self, rho: GridDensity1D) -> np.ndarray:
        raise NotImplementedError

    def first_variation(self, rho: GridDensity1D) -> FirstVariationField:
        v = self.variation(rho)
        return FirstVariationField(v, derivative(v, rho.dx))

    def metric_slope_sq(self, rho: GridDensity1D) -> float:
        g = self.first_variation(rho).gradient
        return rho.integrate(g * g * rho.values)


class Potential(EnergyFunctional):
    """``J(rho) = int E rho`` for a potential given as a callable or grid values."""

    def __init__(self, potential):
        self.potential = potential

    def evaluate(self, rho):
        return rho.integrate(field_on(self.potential, rho) * rho.values)

    def variation(self, rho):
        return field_on(self.potential, rho).copy()


class Entropy(EnergyFunctional):
    """``J(rho) = int rho log rho``."""

    def evaluate(self, rho):
        _check_interior_support(rho)
        return rho.integrate(_xlogx(rho))

    def variation(self, rho):
        _check_interior_support(rho)
        return _log_density(rho) + 1.0


class KL(EnergyFunctional):
    """``J(rho) = int rho (log rho - log pi)``; ``log_target`` must be normalized on the grid."""

    def __init__(self, log_target):
        self.log_target = log_target

    def _log_pi(self, rho):
        lp = field_on(self.log_target, rho)
        if not np.all(np.isfinite(lp)):
            raise ValueError("target log-density is not finite on the grid")
        return lp

    def evaluate(self, rho):
        _check_interior_support(rho)
        lp = self._log_pi(rho)
        m = rho.support_mask()
        out = np.zeros(rho.n)
        out[m] = rho.values[m] * (np.log(rho.values[m]) - lp[m])
        return rho.integrate(out)

    def variation(self, rho):
        _check_interior_support(rho)
        return _log_density(rho) - self._log_pi(rho) + 1.0

    def fisher_divergence(self, rho: GridDensity1D) -> float:
        """``int |d_x log rho - d_x log pi|^2 rho`` computed directly."""
        g = derivative(_log_density(rho), rho.dx) - derivative(self._log_pi(rho), rho.dx)
        return rho.integrate(g * g * rho.values)


class Interaction(EnergyFunctional):
    """``J(rho) = 1/2 int int K(x - y) rho(x) rho(y)`` for an even kernel ``K``.

    The first variation is the convolution ``K * rho``; both are computed as
    direct double sums with trapezoid weights.
    """

    def __init__(self, kernel: Callable[[np.ndarray], np.ndarray], probe: float = 4.0):
        s = np.linspace(-probe, probe, 257)
        asym = float(np.max(np.abs(kernel(s) - kernel(-s))))
        if asym > EVEN_TOL:
            raise ValueError(f"interaction kernel is not even (max asymmetry {asym:.3e})")
        self.kernel = kernel

    def _convolution(self, rho):
        if rho.n > MAX_INTERACTION_NODES:
            raise ValueError(f"interaction energy supports at most {MAX_INTERACTION_NODES} nodes")
        x = rho.x
        k = self.kernel(x[:, None] - x[None, :])
        return k @ (rho.weights * rho.values)

    def evaluate(self, rho):
        return 0.5 * rho.integrate(self._convolution(rho) * rho.values)

    def variation(self, rho):
        return self._convolution(rho)


class Internal(EnergyFunctional):
    """``J(rho) = int U(rho)`` with ``U`` and its derivative ``dU`` supplied by the caller."""

    def __init__(self, u: Callable, du: Callable, exponent: float | None = None):
        self.u = u
        self.du = du
        self.exponent = exponent

    def evaluate(self, rho):
        return rho.integrate(self.u(rho.values))

    def variation(self, rho):
        return np.asarray(self.du(rho.values), dtype=float)

    def dirichlet_bias(self, rho: GridDensity1D, eta: float) -> float:
        """Implicit bias of the porous-medium energy in Dirichlet form.

        ``eta m^2 / (2m - 1)^2 int |d_x rho^((2m - 1)/2)|^2``. Only defined
        for energies built by :func:`porous_medium`.
        """
        if self.exponent is None:
            raise ValueError("Dirichlet form requires a porous-medium energy")
        m = self.exponent
        g = derivative(rho.values ** ((2.0 * m - 1.0) / 2.0), rho.dx)
        return eta * m * m / (2.0 * m - 1.0) ** 2 * rho.integrate(g * g)


def porous_medium(m: float) -> Internal:
    """``U(rho) = rho^m / (m - 1)`` with ``U'(rho) = m / (m - 1) rho^(m - 1)``."""
    if not m > 1:
        raise ValueError("porous-medium exponent must exceed 1")
    return Internal(lambda r: r**m / (m - 1.0), lambda r: m / (m - 1.0) * r ** (m - 1.0), exponent=m)


class FreeEnergy(EnergyFunctional):
    """``J(rho) = int E rho + (1/beta) int rho log rho``."""

    def __init__(self, potential, beta: float = 1.0):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.potential = potential
        self.beta = beta

    def evaluate(self, rho):
        _check_interior_support(rho)
        return rho.integrate(field_on(self.potential, rho) * rho.values + _xlogx(rho) / self.beta)

    def variation(self, rho):
        _check_interior_support(rho)
        return field_on(self.potential, rho) + _log_density(rho) / self.beta

    def slope_terms(self, rho: GridDensity1D) -> tuple[float, float, float]:
        """Potential, cross and Fisher parts of the squared metric slope.

        ``|dJ|^2 = int |E'|^2 rho + (2/beta) int E' (log rho)' rho + beta^-2 int |(log rho)'|^2 rho``.
        """
        de = derivative(field_on(self.potential, rho), rho.dx)
        dl = derivative(_log_density(rho), rho.dx)
        r = rho.values
        return (
            rho.integrate(de * de * r),
            2.0 / self.beta * rho.integrate(de * dl * r),
            rho.integrate(dl * dl * r) / self.beta**2,
        )


# ---------------------------------------------------------------------------
# generic entry points


def evaluate(f: EnergyFunctional, rho: GridDensity1D) -> float:
    return f.evaluate(rho)


def first_variation(f: EnergyFunctional, rho: GridDensity1D) -> FirstVariationField:
    return f.first_variation(rho)


def metric_slope_sq(f: EnergyFunctional, rho: GridDensity1D) -> float:
    return f.metric_slope_sq(rho)


class ModifiedEnergy:
    """Evaluator of ``J^eta(rho) = J(rho) - (eta/4) |dJ(rho)|^2``."""

    def __init__(self, base: EnergyFunctional, eta: float):
        if eta < 0:
            raise ValueError("eta must be non-negative")
        self.base = base
        self.eta = eta

    def evaluate(self, rho: GridDensity1D) -> float:
        j = self.base.evaluate(rho)
        if self.eta == 0:
            return j
        return j - 0.25 * self.eta * self.base.metric_slope_sq(rho)


def modified_energy(f: EnergyFunctional, eta: float) -> ModifiedEnergy:
    return ModifiedEnergy(f, eta)


def implicit_bias(f: EnergyFunctional, rho: GridDensity1D, eta: float) -> float:
    """``H^eta(rho) = J(rho) - J^eta(rho) = (eta/4) |dJ(rho)|^2``."""
    return 0.25 * eta * f.metric_slope_sq(rho)


# ---------------------------------------------------------------------------
# Fisher functional and Langevin velocity


def fisher_information(rho: GridDensity1D) -> float:
    """``I[rho] = int |d_x log rho|^2 rho``."""
    _check_interior_support(rho)
    g = derivative(_log_density(rho), rho.dx)
    return rho.integrate(g * g * rho.values)


def fisher_first_variation(rho: GridDensity1D) -> np.ndarray:
    """``-2 (log rho)'' - ((log rho)')^2`` on the grid."""
    lr = _log_density(rho, require_positive=True)
    return -2.0 * second_derivative(lr, rho.dx) - derivative(lr, rho.dx) ** 2


def fisher_first_variation_sqrt_form(rho: GridDensity1D) -> np.ndarray:
    """Equivalent form ``-4 (sqrt rho)'' / sqrt rho``."""
    _log_density(rho, require_positive=True)
    s = np.sqrt(rho.values)
    return -4.0 * second_derivative(s, rho.dx) / s


def corrected_velocity_langevin(
    rho: GridDensity1D,
    potential,
    beta: float,
    eta: float,
    boundary_nodes: int = 2,
) -> np.ndarray:
    """Velocity of the Wasserstein flow on the modified free energy.

    ``v = -(E' + (log rho)'/beta) + (eta/4) (d_x |E'|^2 - beta^-2 d_x |(log rho)'|^2)
    - (eta / (2 beta)) d_x^3 (E + log rho / beta)``.

    ``beta = math.inf`` drops every entropy term. The correction is set to
    zero on ``boundary_nodes`` nodes at each end of the grid, where the
    third-derivative stencil is one-sided.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    dx = rho.dx
    e = field_on(potential, rho)
    de = derivative(e, dx)
    inv_beta = 0.0 if math.isinf(beta) else 1.0 / beta
    if inv_beta:
        lr = _log_density(rho, require_positive=True)
        dl = derivative(lr, dx)
    else:
        lr = np.zeros(rho.n)
        dl = lr
    v = -(de + inv_beta * dl)
    if eta == 0:
        return v
    corr = 0.25 * eta * (derivative(de * de, dx) - inv_beta**2 * derivative(dl * dl, dx))
    corr -= 0.5 * eta * inv_beta * derivative(second_derivative(e + inv_beta * lr, dx), dx)
    if boundary_nodes:
        corr[:boundary_nodes] = 0.0
        corr[-boundary_nodes:] = 0.0
    return v + corr
