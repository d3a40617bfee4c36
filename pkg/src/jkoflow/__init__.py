"""Wasserstein gradient flows with step-size corrections from backward error analysis.

Modules
-------
matcore      symmetric eigensolver and SPD matrix functions
rng          SplitMix64 streams for reproducible seeding
bures        Gaussian (Bures-Wasserstein) flows and the analytic JKO step
energies     free-energy functionals, first variations, metric slopes, biases
grid1d       1D grid densities, transport maps, upwind gradient-flow solver
particles1d  deterministic particle Langevin flow with KDE scores
riemannian   Euclidean and sphere gradient descent against modified flows
config       experiment parameter files
experiments  experiment drivers and acceptance checks
cli          the ``jkoflow`` command
"""

__version__ = "0.1.0"
