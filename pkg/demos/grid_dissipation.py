"""Energy balance of the grid Fokker-Planck flow toward a quartic target.

Run with ``python3 demos/grid_dissipation.py``. Prints the KL to the target
and the ratio of the measured energy decay rate to the squared metric slope.
"""

import numpy as np

from jkoflow.config import ExperimentConfig
from jkoflow.experiments import dissipation_table, grid_kl_flow
from jkoflow.grid1d import kl_to_target

cfg = ExperimentConfig("grid-flow")
traj, free, log_pi = grid_kl_flow(cfg)
j, s, rate = dissipation_table(traj, free)
print(f"{len(traj.times) - 1} steps, dt = {traj.dt:.2e}, largest CFL number {traj.max_cfl:.3f}\n")
print(f"{'t':>6} {'KL':>12} {'-dJ/dt / slope^2':>18}")
for t in (0.0, 0.1, 0.25, 0.5, 0.75, 0.95):
    k = int(np.searchsorted(traj.times, t))
    print(f"{traj.times[k]:6.3f} {kl_to_target(traj.densities[k], log_pi):12.5e} {-rate[k] / s[k]:18.5f}")
