"""Experiment drivers behind the ``jkoflow`` command.

Each driver takes an :class:`~jkoflow.config.ExperimentConfig` and an output
directory, writes its CSV files there, and returns the acceptance checks it
measured. :func:`run` adds the plain-text report with the config echo block.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bures, energies, grid1d, particles1d, riemannian
from .config import ExperimentConfig
from .fitting import fit_loglog
from .rng import SplitMix64, orthogonal_matrix


@dataclass(frozen=True)
class Check:
    """One acceptance line: ``PASS|FAIL <id> measured=<v> threshold=<t>``."""

    id: str
    passed: bool
    measured: str
    threshold: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.id} measured={self.measured} threshold={self.threshold}"


def at_least(cid: str, value: float, bound: float) -> Check:
    return Check(cid, bool(value >= bound), f"{value:.6g}", f">={bound:g}")


def at_most(cid: str, value: float, bound: float) -> Check:
    return Check(cid, bool(value <= bound), f"{value:.6g}", f"<={bound:g}")


def within(cid: str, value: float, lo: float, hi: float) -> Check:
    return Check(cid, bool(lo <= value <= hi), f"{value:.6g}", f"[{lo:g},{hi:g}]")


def matches(cid: str, got, expected) -> Check:
    fmt = lambda seq: "{" + ",".join(str(v).lower() for v in seq) + "}"  # noqa: E731
    return Check(cid, list(got) == list(expected), fmt(got), fmt(expected))


@dataclass
class ExperimentResult:
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def _path(out_dir, name, result):
    p = os.path.join(out_dir, name)
    result.files.append(p)
    return p


# ---------------------------------------------------------------------------
# Bures-Wasserstein


def bw_scaling_slopes(rows) -> dict:
    """Log-log slopes of every error column of a BW error table."""
    out = {}
    for col in ("w2", "mean_err", "cov_err"):
        for kind in ("vanilla", "modified"):
            key = f"{col}_{kind}"
            out[key] = fit_loglog([(r.eta, getattr(r, key)) for r in rows]).slope
    return out


def richardson_errors(seed: int, n_seeds: int, beta: float = 1.0, eps: float = 0.5):
    """Worst relative covariance error and absolute mean error of the extracted correction."""
    cov_err, mean_err = 0.0, 0.0
    for k in range(n_seeds):
        sys_, s0 = bures.random_instance(seed + k, beta=beta, eps=eps)
        cm, cc = bures.jko_second_order_coefficients(s0, sys_)
        rm, rc = bures.correction_rhs(s0, sys_)
        cov_err = max(cov_err, float(np.linalg.norm(cc - rc) / np.linalg.norm(rc)))
        mean_err = max(mean_err, float(np.linalg.norm(cm - rm)))
    return cov_err, mean_err


def run_bw_scaling(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    with _Timer() as t1:
        sys_, s0 = bures.random_instance(cfg.seed, beta=cfg["beta"], eps=cfg["eps"])
        rows = bures.bw_error_scaling(sys_, s0, cfg["etas"], cfg["steps_per_eta"])
        slopes = bw_scaling_slopes(rows)
    bures.write_error_csv(rows, _path(out_dir, "bw_scaling.csv", res))
    res.tables["rows"] = rows
    res.tables["slopes"] = slopes
    gain = {c: slopes[f"{c}_modified"] - slopes[f"{c}_vanilla"] for c in ("w2", "mean_err", "cov_err")}
    for c in gain:
        res.summary.append(
            f"slope {c}: vanilla {slopes[c + '_vanilla']:.4f} modified {slopes[c + '_modified']:.4f} gain {gain[c]:+.4f}"
        )
    res.checks += [
        within("C1.vanilla_w2_slope", slopes["w2_vanilla"], 0.8, 1.3),
        at_least("C1.w2_slope_gain", gain["w2"], 0.8),
        at_least("C1.mean_slope_gain", gain["mean_err"], 0.85),
        at_least("C1.cov_slope_gain", gain["cov_err"], 0.85),
        at_most("C1.runtime_s", t1.elapsed, 30.0),
    ]
    with _Timer() as t2:
        cov_err, mean_err = richardson_errors(cfg.seed, cfg["richardson_seeds"], cfg["beta"], cfg["eps"])
    res.tables["richardson"] = (cov_err, mean_err)
    res.summary.append(f"richardson over {cfg['richardson_seeds']} seeds: cov rel err {cov_err:.3e}, mean err {mean_err:.3e}")
    res.checks += [
        at_most("C2.cov_coefficient_rel_err", cov_err, 1e-4),
        at_most("C2.mean_coefficient_err", mean_err, 1e-6),
        at_most("C2.runtime_s", t2.elapsed, 5.0),
    ]
    return res


def run_bw_rotation(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    """Slope gains across independently rotated instances, plus rotation equivariance.

    Instance ``k`` uses seed ``cfg.seed + k``. Conjugating a whole instance
    (drift, mean, covariance) by a further random rotation must leave the
    error table unchanged up to round-off.
    """
    res = ExperimentResult()
    etas = cfg["etas"]
    lines = ["seed,w2_slope_vanilla,w2_slope_modified,w2_gain,mean_gain,cov_gain"]
    gains, worst_equiv = [], 0.0
    for k in range(cfg["n_instances"]):
        seed = cfg.seed + k
        sys_, s0 = bures.random_instance(seed, beta=cfg["beta"])
        rows = bures.bw_error_scaling(sys_, s0, etas, cfg["steps_per_eta"])
        sl = bw_scaling_slopes(rows)
        g = [sl[f"{c}_modified"] - sl[f"{c}_vanilla"] for c in ("w2", "mean_err", "cov_err")]
        gains.append(g)
        lines.append(f"{seed},{sl['w2_vanilla']:.6f},{sl['w2_modified']:.6f},{g[0]:.6f},{g[1]:.6f},{g[2]:.6f}")
        if k == 0:
            r = orthogonal_matrix(SplitMix64(seed).spawn(1), s0.dim)
            rsys = bures.LinearFokkerPlanck(r @ sys_.drift @ r.T, sys_.beta)
            rs0 = bures.GaussianState(r @ s0.mean, r @ s0.cov @ r.T)
            rrows = bures.bw_error_scaling(rsys, rs0, etas[:2], cfg["steps_per_eta"])
            for a, b in zip(rows, rrows):
                va, vb = np.array(a.as_tuple()[1:]), np.array(b.as_tuple()[1:])
                worst_equiv = max(worst_equiv, float(np.max(np.abs(va - vb) / va)))
    with open(_path(out_dir, "bw_rotation.csv", res), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    gains = np.array(gains)
    res.tables["gains"] = gains
    res.summary += lines[1:]
    res.checks += [
        at_least("rotation.min_w2_gain", float(gains[:, 0].min()), 0.8),
        at_least("rotation.min_mean_gain", float(gains[:, 1].min()), 0.85),
        at_least("rotation.min_cov_gain", float(gains[:, 2].min()), 0.85),
        at_most("rotation.equivariance_rel_err", worst_equiv, 1e-8),
    ]
    return res


# ---------------------------------------------------------------------------
# quartic transport maps


def quartic_scan(h: float, etas, n_in=2048, n_out=8192, y_max=4.0, ratio=5.0, window=0.2, samples=20001):
    """Monotonicity verdict and jump-detector outcome for each ``eta``."""
    rho0 = grid1d.GridDensity1D.gaussian(n=n_in)
    out = []
    for eta in etas:
        tmap = grid1d.quartic_maps(h, eta)
        mono = grid1d.is_monotone(tmap, samples=samples)
        pf = grid1d.pushforward(rho0, tmap, (-y_max, y_max, n_out))
        jump = grid1d.detect_jump(pf.density, grid1d.quartic_jump_locations(h, eta), window, ratio)
        out.append((float(eta), mono, jump, pf))
    return out


def run_quartic_step(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    h = cfg["h"]
    kw = dict(
        n_in=cfg["n_in"], n_out=cfg["n_out"], y_max=cfg["y_max"],
        ratio=cfg["jump_ratio"], window=cfg["jump_window"], samples=cfg["samples"],
    )
    scan = quartic_scan(h, cfg["etas"], **kw)
    with open(_path(out_dir, "quartic_step.csv", res), "w") as fh:
        fh.write("eta,monotone,min_derivative,jump_hit,max_ratio,raw_mass,max_preimages\n")
        for eta, mono, jump, pf in scan:
            fh.write(
                f"{eta:.10g},{str(mono.monotone).lower()},{mono.min_derivative:.10e},"
                f"{str(jump.hit).lower()},{jump.max_ratio:.6e},{pf.raw_mass:.10f},{pf.max_preimages}\n"
            )
            grid1d.write_density_csv(pf.density, _path(out_dir, f"pushforward_eta_{eta:g}.csv", res))
    res.tables["scan"] = [(e, m.monotone, j.hit) for e, m, j, _ in scan]
    res.summary += [
        f"eta {e:g}: monotone {str(m.monotone).lower()} jump {str(j.hit).lower()}" for e, m, j, _ in scan
    ]

    with _Timer() as t:
        thr = grid1d.quartic_monotone_threshold(h)
        mono_etas = [0.29 * h, thr - 1e-9, thr + 1e-9, 0.31 * h]
        verdicts = [grid1d.is_monotone(grid1d.quartic_maps(h, e), samples=cfg["samples"]).monotone for e in mono_etas]
        jump_etas = [f * h for f in (0.1, 0.2, 0.29, 0.31, 0.4, 0.5)]
        hits = [j.hit for _, _, j, _ in quartic_scan(h, jump_etas, **kw)]
    res.checks += [
        matches("C3.monotone_verdicts", verdicts, [False, False, True, True]),
        matches("C3.jump_hits", hits, [e < thr for e in jump_etas]),
        at_most("C3.runtime_s", t.elapsed, 10.0),
    ]
    return res


# ---------------------------------------------------------------------------
# grid flow


def quartic_log_target(x):
    return -(0.5 * x * x + 0.25 * x**4)


def grid_kl_flow(cfg: ExperimentConfig):
    """Grid Langevin flow from a Gaussian toward ``pi ~ exp(-x^2/2 - x^4/4)``; returns (trajectory, KL functional)."""
    L, n, beta, eta = cfg["x_max"], cfg["n"], cfg["beta"], cfg["eta"]
    log_pi = grid1d.normalized_log_density(lambda x: beta * quartic_log_target(x), -L, L, n)
    rho0 = grid1d.GridDensity1D.gaussian(cfg["init_mean"], cfg["init_std"], -L, L, n)
    dx = rho0.dx
    potential = -log_pi / beta  # E up to a constant, so that pi = exp(-beta E)
    if eta == 0:

        def velocity(r):
            return grid1d.face_velocity_from_potential((r.log() - log_pi) / beta, dx)

    else:

        def velocity(r):
            return energies.corrected_velocity_langevin(r, potential, beta, eta)

    rate = float(np.max(np.abs(velocity(rho0)))) / dx + 2.0 / (beta * dx * dx)
    n_steps = max(1, int(math.ceil(cfg["t_end"] * rate / cfg["cfl_target"])))
    traj = grid1d.wgf_solve(rho0, velocity, cfg["t_end"], n_steps, diffusivity=1.0 / beta)
    free = energies.FreeEnergy(potential, beta)
    return traj, free, log_pi


def dissipation_table(traj, functional):
    j = np.array([functional.evaluate(r) for r in traj.densities])
    s = np.array([functional.metric_slope_sq(r) for r in traj.densities])
    rate = np.diff(j) / np.diff(traj.times)
    return j, s, rate


def run_grid_flow(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    with _Timer() as t:
        traj, free, log_pi = grid_kl_flow(cfg)
        j, s, rate = dissipation_table(traj, free)
        times = traj.times[:-1]
        lo, hi = cfg["window_start"] * cfg["t_end"], cfg["window_end"] * cfg["t_end"]
        win = (times >= lo) & (times <= hi)
        rel = np.abs(rate + s[:-1]) / s[:-1]
        worst = float(rel[win].max())
    kl = np.array([grid1d.kl_to_target(r, log_pi) for r in traj.densities])
    stride = max(1, len(traj.times) // 1000)
    with open(_path(out_dir, "grid_flow_kl.csv", res), "w") as fh:
        fh.write("t,kl,slope_sq,dissipation_rate\n")
        for k in range(0, len(times), stride):
            fh.write(f"{traj.times[k]:.8f},{kl[k]:.10e},{s[k]:.10e},{rate[k]:.10e}\n")
    snaps = np.unique(np.linspace(0, len(traj.densities) - 1, cfg["snapshots"] + 1).astype(int))
    for k in snaps:
        grid1d.write_density_csv(traj.densities[k], _path(out_dir, f"grid_flow_t_{traj.times[k]:.4f}.csv", res))
    grid1d.write_trajectory_metadata(traj, _path(out_dir, "grid_flow_meta.txt", res))
    res.tables.update(kl=kl, rel=rel, times=traj.times)
    res.summary.append(f"{len(traj.times) - 1} steps, dt {traj.dt:.3e}, max CFL {traj.max_cfl:.3f}")
    res.summary.append(f"KL {kl[0]:.5e} -> {kl[-1]:.5e}")
    res.checks += [
        at_most("C7.dissipation_rel_err", worst, 0.10),
        Check("C7.kl_monotone", bool(np.all(np.diff(kl) <= 0)), str(bool(np.all(np.diff(kl) <= 0))).lower(), "true"),
        at_most("C7.runtime_s", t.elapsed, 30.0),
    ]
    return res


# ---------------------------------------------------------------------------
# particles


def run_particle_sweep(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    seeds = [cfg.seed + k for k in range(cfg["n_seeds"])]
    etas = sorted(cfg["etas"], reverse=True)
    L = cfg["kl_x_max"]
    kl_kwargs = dict(domain=(-L, L), bins=cfg["kl_bins"], bandwidth=cfg["kl_bandwidth"])
    x0 = particles1d.initial_ensembles(seeds, cfg["n_particles"])
    pot = particles1d.quartic_potential()
    finals = {}
    with _Timer() as t:
        for eta in etas:
            run = particles1d.run_particles_batched(
                x0, pot, cfg["beta"], eta, cfg["h"], cfg["n_steps"],
                refresh=cfg["refresh"], stencil_fraction=cfg["stencil_fraction"], n_bins=cfg["n_bins"],
            )
            finals[eta] = particles1d.batched_ensemble_kl(
                run.final, lambda x: cfg["beta"] * quartic_log_target(x), **kl_kwargs
            )
    rows = [
        particles1d.SweepRow(eta, float(v.mean()), float(v.std()), float(np.median(v)), len(seeds))
        for eta, v in finals.items()
    ]
    particles1d.write_sweep_csv(rows, _path(out_dir, "particle_sweep.csv", res))
    with open(_path(out_dir, "particle_final_kl.csv", res), "w") as fh:
        fh.write("eta,seed,kl\n")
        for eta in etas:
            for seed, v in zip(seeds, finals[eta]):
                fh.write(f"{eta:.6g},{seed},{v:.10e}\n")
    res.tables.update(rows=rows, finals=finals)
    res.summary.append("eta, mean_kl, std_kl, median_kl")
    res.summary += [f"{r.eta:g}, {r.mean_kl:.6e}, {r.std_kl:.6e}, {r.median_kl:.6e}" for r in rows]
    base = finals.get(0.0)
    if base is not None and len(finals) > 1:
        best = min(float(np.median(v)) for e, v in finals.items() if e > 0)
        res.checks.append(at_most("C8.best_median_kl_minus_baseline", best - float(np.median(base)), 0.0))
    res.checks.append(at_most("C8.runtime_s", t.elapsed, 300.0))
    return res


# ---------------------------------------------------------------------------
# Riemannian order


def order_slopes(rows):
    return (
        fit_loglog([(r.eta, r.err_plain) for r in rows]).slope,
        fit_loglog([(r.eta, r.err_modified) for r in rows]).slope,
    )


def run_riemannian_order(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    etas = cfg["etas"]
    cases = [
        ("C4", "euclidean", riemannian.Euclidean(1), riemannian.quadratic_objective([1.0]), np.array([cfg["euclid_x0"]])),
        ("C5", "sphere", riemannian.Sphere(3), riemannian.sphere_test_objective(cfg["sphere_a"]), riemannian.Sphere(3).random_point(cfg.seed)),
    ]
    runtime_limit = {"C4": 5.0, "C5": 10.0}
    for cid, name, m, f, x0 in cases:
        with _Timer() as t:
            slopes = {}
            for scheme in ("forward", "backward"):
                rows = riemannian.order_match_experiment(m, f, x0, etas, scheme, cfg["t_final"], cfg["substeps"])
                riemannian.write_order_csv(rows, _path(out_dir, f"order_{name}_{scheme}.csv", res))
                slopes[scheme] = order_slopes(rows)
                res.summary.append(
                    f"{name} {scheme}: plain slope {slopes[scheme][0]:.4f} modified slope {slopes[scheme][1]:.4f}"
                )
                res.tables[(name, scheme)] = rows
        for scheme, (sp, sm) in slopes.items():
            res.checks += [
                within(f"{cid}.{scheme}.plain_slope", sp, 0.8, 1.3),
                at_least(f"{cid}.{scheme}.modified_slope", sm, 1.8),
            ]
        res.checks.append(at_most(f"{cid}.runtime_s", t.elapsed, runtime_limit[cid]))
    return res


# ---------------------------------------------------------------------------
# variation identities


def smooth_perturbation(rho: grid1d.GridDensity1D, seed: int) -> np.ndarray:
    """Seeded zero-mass perturbation ``chi = rho (c0 x + c1 (x^2 - 1) + c2 sin x) - const rho``."""
    c = SplitMix64(seed).standard_normal(3)
    x = rho.x
    chi = (c[0] * x + c[1] * (x * x - 1.0) + c[2] * np.sin(x)) * rho.values
    return chi - rho.integrate(chi) * rho.values


def catalog(rho: grid1d.GridDensity1D) -> dict:
    """One instance of each catalog functional on ``rho``'s grid."""
    L, n = rho.x_max, rho.n
    return {
        "potential": energies.Potential(lambda x: 0.5 * x * x + np.sin(x)),
        "entropy": energies.Entropy(),
        "kl": energies.KL(grid1d.normalized_log_density(quartic_log_target, -L, L, n)),
        "interaction": energies.Interaction(lambda z: np.exp(-z * z)),
        "porous_medium": energies.porous_medium(2.0),
        "free_energy": energies.FreeEnergy(lambda x: 0.25 * x**4, 0.7),
    }


def functional_derivative_errors(rho, eps: float, seeds) -> dict:
    """Worst relative gap between central differences of ``J`` and ``int (dJ/drho) chi``."""
    out = {}
    funcs = dict(catalog(rho))
    for name, f in funcs.items():
        worst = 0.0
        for seed in seeds:
            chi = smooth_perturbation(rho, seed)
            jp = f.evaluate(grid1d.GridDensity1D(rho.x_min, rho.x_max, rho.values + eps * chi))
            jm = f.evaluate(grid1d.GridDensity1D(rho.x_min, rho.x_max, rho.values - eps * chi))
            fd = (jp - jm) / (2.0 * eps)
            an = rho.integrate(f.variation(rho) * chi)
            worst = max(worst, abs(fd - an) / abs(an))
        out[name] = worst
    worst = 0.0
    for seed in seeds:
        chi = smooth_perturbation(rho, seed)
        ip = energies.fisher_information(grid1d.GridDensity1D(rho.x_min, rho.x_max, rho.values + eps * chi))
        im = energies.fisher_information(grid1d.GridDensity1D(rho.x_min, rho.x_max, rho.values - eps * chi))
        an = rho.integrate(energies.fisher_first_variation(rho) * chi)
        worst = max(worst, abs((ip - im) / (2.0 * eps) - an) / abs(an))
    out["fisher"] = worst
    return out


def run_variation_checks(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    res = ExperimentResult()
    with _Timer() as t:
        L, n = cfg["x_max"], cfg["n"]
        rho = grid1d.GridDensity1D.gaussian(0.0, 1.0, -L, L, n)
        seeds = [cfg.seed + k for k in range(cfg["n_perturbations"])]
        fd = functional_derivative_errors(rho, cfg["eps"], seeds)

        fl = cfg["fisher_x_max"]
        fine = grid1d.GridDensity1D.gaussian(0.0, 1.0, -fl, fl, cfg["fisher_n"])
        inner = np.abs(fine.x) <= cfg["fisher_window"]
        fv = energies.fisher_first_variation(fine)
        fv_sqrt = energies.fisher_first_variation_sqrt_form(fine)
        fisher_closed = float(np.max(np.abs(fv - (2.0 - fine.x**2))[inner]))
        fisher_forms = float(np.max(np.abs(fv - fv_sqrt)[inner]))

        slope_err = {}
        for sigma in (0.5, 1.0, 2.0):
            r = grid1d.GridDensity1D.gaussian(0.0, sigma, -8.0 * sigma, 8.0 * sigma, 4096)
            slope_err[sigma] = abs(energies.Entropy().metric_slope_sq(r) - 1.0 / sigma**2)

    rows = [(f"functional_derivative.{k}", v, 1e-4) for k, v in fd.items()]
    rows += [("fisher.closed_form", fisher_closed, 1e-4), ("fisher.two_forms", fisher_forms, 1e-6)]
    rows += [(f"entropy_slope.sigma_{s:g}", v, 1e-3) for s, v in slope_err.items()]
    with open(_path(out_dir, "variation_checks.csv", res), "w") as fh:
        fh.write("check,measured,threshold\n")
        for name, v, thr in rows:
            fh.write(f"{name},{v:.6e},{thr:g}\n")
    res.tables.update(functional_derivative=fd, fisher=(fisher_closed, fisher_forms), slope=slope_err)
    res.checks += [
        at_most("C6a.functional_derivative_rel_err", max(fd.values()), 1e-4),
        at_most("C6b.fisher_closed_form_err", fisher_closed, 1e-4),
        at_most("C6b.fisher_two_forms_err", fisher_forms, 1e-6),
        at_most("C6c.entropy_slope_err", max(slope_err.values()), 1e-3),
        at_most("C6.runtime_s", t.elapsed, 10.0),
    ]
    return res


DRIVERS: dict[str, Callable[[ExperimentConfig, str], ExperimentResult]] = {
    "bw-scaling": run_bw_scaling,
    "bw-rotation": run_bw_rotation,
    "quartic-step": run_quartic_step,
    "grid-flow": run_grid_flow,
    "particle-sweep": run_particle_sweep,
    "riemannian-order": run_riemannian_order,
    "variation-checks": run_variation_checks,
}


def run(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    """Run one experiment, write its CSV files and ``report.txt`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    result = DRIVERS[cfg.experiment](cfg, out_dir)
    report = _path(out_dir, "report.txt", result)
    with open(report, "w") as fh:
        fh.write("# config\n")
        for line in cfg.echo():
            fh.write(line + "\n")
        if result.summary:
            fh.write("# summary\n")
            for line in result.summary:
                fh.write(line + "\n")
        fh.write("# acceptance\n")
        for c in result.checks:
            fh.write(c.line() + "\n")
    return result
