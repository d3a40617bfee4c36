import math

import numpy as np
import pytest

from jkoflow import energies
from jkoflow.grid1d import GridDensity1D, normalized_log_density


def gauss(mean=0.0, std=1.0, n=2048, half_width=8.0):
    return GridDensity1D.gaussian(mean, std, mean - half_width * std, mean + half_width * std, n)


def log_std_normal(x):
    return -0.5 * x * x - 0.5 * math.log(2 * math.pi)


# closed forms on Gaussians -------------------------------------------------


def test_entropy_of_gaussian():
    for s in (0.5, 1.0, 2.0):
        assert energies.Entropy().evaluate(gauss(std=s)) == pytest.approx(-0.5 * math.log(2 * math.pi * math.e * s * s), abs=1e-10)


def test_entropy_slope_is_inverse_variance():
    for s in (0.5, 1.0, 2.0):
        assert energies.Entropy().metric_slope_sq(gauss(std=s, n=4096)) == pytest.approx(1.0 / s**2, abs=1e-3)


def test_potential_value_and_slope():
    rho = gauss(0.7, 1.2, half_width=10)
    f = energies.Potential(lambda x: 0.5 * x * x)
    assert f.evaluate(rho) == pytest.approx(0.5 * (0.49 + 1.44), rel=1e-10)
    assert f.metric_slope_sq(rho) == pytest.approx(0.49 + 1.44, rel=1e-6)


def test_kl_and_fisher_divergence_between_unit_gaussians():
    m = 0.6
    rho = GridDensity1D.gaussian(m, 1.0, -9, 9, 4096)
    f = energies.KL(log_std_normal)
    assert f.evaluate(rho) == pytest.approx(m * m / 2, abs=1e-9)
    assert f.fisher_divergence(rho) == pytest.approx(m * m, rel=1e-5)
    assert f.metric_slope_sq(rho) == pytest.approx(m * m, rel=1e-5)


def test_interaction_energy_gaussian_kernel():
    # X - Y ~ N(0, 2), E exp(-(X - Y)^2) = 1 / sqrt(5)
    f = energies.Interaction(lambda z: np.exp(-z * z))
    rho = gauss()
    assert f.evaluate(rho) == pytest.approx(0.5 / math.sqrt(5.0), rel=1e-9)
    # K * rho at 0 is E exp(-X^2) = 1 / sqrt(3)
    v = f.variation(rho)
    assert v[np.argmin(np.abs(rho.x))] == pytest.approx(1 / math.sqrt(3.0), abs=1e-5)


def test_interaction_rejects_odd_kernel():
    with pytest.raises(ValueError):
        energies.Interaction(lambda z: z)


def test_porous_medium_value():
    rho = gauss()
    assert energies.porous_medium(2.0).evaluate(rho) == pytest.approx(1 / (2 * math.sqrt(math.pi)), rel=1e-10)
    with pytest.raises(ValueError):
        energies.porous_medium(1.0)


def test_free_energy_slope_terms_sum_to_slope():
    rho = GridDensity1D.gaussian(0.4, 0.9, -7, 7, 2048)
    f = energies.FreeEnergy(lambda x: 0.25 * x**4, 0.7)
    assert sum(f.slope_terms(rho)) == pytest.approx(f.metric_slope_sq(rho), rel=1e-10)


def test_free_energy_vanishes_slope_at_equilibrium():
    beta = 2.0
    lp = normalized_log_density(lambda x: -beta * 0.25 * x**4, -5, 5, 4001)
    rho = GridDensity1D(-5.0, 5.0, np.exp(lp))
    f = energies.FreeEnergy(lambda x: 0.25 * x**4, beta)
    assert f.metric_slope_sq(rho) < 1e-8


# implicit-bias catalog -----------------------------------------------------


def test_bias_catalog():
    eta = 0.1
    rho = GridDensity1D.gaussian(0.3, 0.8, -7, 7, 4096)
    pot = energies.Potential(lambda x: np.cos(x))
    dirichlet = rho.integrate(np.sin(rho.x) ** 2 * rho.values)
    assert energies.implicit_bias(pot, rho, eta) == pytest.approx(eta / 4 * dirichlet, rel=1e-5)
    ent = energies.Entropy()
    assert energies.implicit_bias(ent, rho, eta) == pytest.approx(eta / 4 * energies.fisher_information(rho), rel=1e-12)
    kl = energies.KL(log_std_normal)
    assert energies.implicit_bias(kl, rho, eta) == pytest.approx(eta / 4 * kl.fisher_divergence(rho), rel=1e-12)


@pytest.mark.parametrize("m", [1.5, 2.0, 3.0])
def test_porous_bias_dirichlet_form(m):
    rho = GridDensity1D.gaussian(0.0, 1.0, -8, 8, 8001)
    f = energies.porous_medium(m)
    assert f.dirichlet_bias(rho, 0.2) == pytest.approx(energies.implicit_bias(f, rho, 0.2), rel=1e-5)


def test_porous_triangle_dirichlet_forms():
    x = np.linspace(-1.5, 1.5, 20001)
    rho = GridDensity1D(-1.5, 1.5, np.clip(1 - np.abs(x), 0, None))
    f = energies.porous_medium(2.0)
    # rho^(3/2) has derivative (3/2) sqrt(rho) sign(x); the bias is eta (4/9)(9/4) int rho = eta
    assert f.dirichlet_bias(rho, 1.0) == pytest.approx(1.0, rel=1e-3)


def test_modified_energy():
    rho = gauss(std=0.5)
    f = energies.Entropy()
    mod = energies.modified_energy(f, 0.2)
    assert mod.evaluate(rho) == pytest.approx(f.evaluate(rho) - 0.05 * 4.0, rel=1e-9)
    assert energies.modified_energy(f, 0.0).evaluate(rho) == f.evaluate(rho)
    with pytest.raises(ValueError):
        energies.modified_energy(f, -1.0)


# first variations ----------------------------------------------------------


def perturbation(rho, seed):
    c = np.random.default_rng(seed).standard_normal(3)
    x = rho.x
    chi = (c[0] * x + c[1] * (x * x - 1) + c[2] * np.sin(2 * x)) * rho.values
    return chi - rho.integrate(chi) * rho.values


CATALOG = {
    "potential": energies.Potential(lambda x: np.cosh(0.3 * x)),
    "entropy": energies.Entropy(),
    "kl": energies.KL(log_std_normal),
    "interaction": energies.Interaction(lambda z: 1.0 / (1.0 + z * z)),
    "porous": energies.porous_medium(3.0),
    "free": energies.FreeEnergy(lambda x: x**4 / 4 - x * x / 2, 1.3),
}


@pytest.mark.parametrize("name", sorted(CATALOG))
@pytest.mark.parametrize("seed", [1, 2])
def test_first_variation_matches_finite_differences(name, seed):
    f = CATALOG[name]
    rho = GridDensity1D.gaussian(0.2, 0.9, -7.2, 7.2, 2048)
    chi = perturbation(rho, seed)
    eps = 1e-5
    fd = (f.evaluate(rho.with_values(rho.values + eps * chi)) - f.evaluate(rho.with_values(rho.values - eps * chi))) / (2 * eps)
    an = rho.integrate(f.variation(rho) * chi)
    assert abs(fd - an) <= 1e-6 * abs(an)


def test_first_variation_field_gradient():
    rho = gauss()
    fv = energies.first_variation(energies.Potential(lambda x: x**3), rho)
    inner = np.abs(rho.x) < 5
    np.testing.assert_allclose(fv.gradient[inner], 3 * rho.x[inner] ** 2, atol=1e-4)


def test_fisher_first_variation_forms():
    rho = GridDensity1D.gaussian(0.0, 1.0, -6.0, 6.0, 20001)
    inner = np.abs(rho.x) <= 3
    a = energies.fisher_first_variation(rho)
    b = energies.fisher_first_variation_sqrt_form(rho)
    assert np.max(np.abs(a - (2 - rho.x**2))[inner]) < 1e-4
    assert np.max(np.abs(a - b)[inner]) < 1e-6


def test_fisher_information_finite_difference():
    rho = GridDensity1D.gaussian(0.0, 1.0, -8, 8, 4096)
    chi = perturbation(rho, 3)
    eps = 1e-5
    fd = (energies.fisher_information(rho.with_values(rho.values + eps * chi))
          - energies.fisher_information(rho.with_values(rho.values - eps * chi))) / (2 * eps)
    an = rho.integrate(energies.fisher_first_variation(rho) * chi)
    assert abs(fd - an) < 1e-3 * abs(an)


def test_entropy_requires_interior_support():
    values = GridDensity1D.gaussian().values.copy()
    values[1000:1010] = 0.0
    with pytest.raises(energies.DensityFloorError):
        energies.Entropy().variation(GridDensity1D.from_values(-8.0, 8.0, values))


# Langevin velocity ---------------------------------------------------------


def test_corrected_velocity_without_noise():
    rho = gauss()
    v = energies.corrected_velocity_langevin(rho, lambda x: 0.5 * x * x, math.inf, 0.2)
    inner = slice(2, -2)
    np.testing.assert_allclose(v[inner], -rho.x[inner] * (1 - 0.1), atol=1e-9)


def test_corrected_velocity_vanishes_at_equilibrium():
    lp = normalized_log_density(lambda x: -(0.5 * x * x + 0.25 * x**4), -5, 5, 2001)
    rho = GridDensity1D(-5.0, 5.0, np.exp(lp))
    v = energies.corrected_velocity_langevin(rho, lambda x: 0.5 * x * x + 0.25 * x**4, 1.0, 0.05)
    inner = np.abs(rho.x) < 3
    assert np.max(np.abs(v[inner])) < 1e-4


def test_corrected_velocity_reduces_to_plain_flow():
    rho = GridDensity1D.gaussian(0.5, 1.4, -8, 8, 2048)
    v = energies.corrected_velocity_langevin(rho, lambda x: 0.5 * x * x, 1.0, 0.0)
    inner = np.abs(rho.x) < 5
    # -(x + d log rho) = -(x - (x - 0.5)/1.96)
    np.testing.assert_allclose(v[inner], -(rho.x - (rho.x - 0.5) / 1.96)[inner], atol=1e-5)
    with pytest.raises(ValueError):
        energies.corrected_velocity_langevin(rho, lambda x: x, 1.0, -0.1)
