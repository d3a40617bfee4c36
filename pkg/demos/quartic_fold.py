"""Where one corrected step of the quartic potential stops being a transport map.

Run with ``python3 demos/quartic_fold.py``. For ``h = 1`` the map
``T(x) = x - h (x^3 - 1.5 eta x^5)`` folds for ``eta < 0.3``; the pushforward
of a standard normal then carries a jump next to the fold.
"""

import numpy as np

from jkoflow import grid1d

h = 1.0
rho0 = grid1d.GridDensity1D.gaussian(n=2048)
print(f"monotonicity threshold: eta = {grid1d.quartic_monotone_threshold(h):.3f}\n")
print(f"{'eta':>6} {'min T_prime':>12} {'monotone':>9} {'jump ratio':>11} {'preimages':>10}")
for eta in (0.1, 0.2, 0.29, 0.31, 0.4):
    tmap = grid1d.quartic_maps(h, eta)
    mono = grid1d.is_monotone(tmap)
    pf = grid1d.pushforward(rho0, tmap, (-4.0, 4.0, 8192))
    jump = grid1d.detect_jump(pf.density, grid1d.quartic_jump_locations(h, eta))
    print(f"{eta:6.2f} {mono.min_derivative:12.4f} {str(mono.monotone):>9} {jump.max_ratio:11.2f} {pf.max_preimages:10d}")

pf = grid1d.pushforward(rho0, grid1d.quartic_maps(h, 0.1), (-4.0, 4.0, 8192))
peak = int(np.argmax(pf.density.values))
print(f"\neta = 0.1: pushforward density peaks at y = {pf.density.x[peak]:.3f}")
