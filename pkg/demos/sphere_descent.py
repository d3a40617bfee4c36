"""Gradient descent on the 2-sphere tracks the corrected flow one order better.

Run with ``python3 demos/sphere_descent.py``. Compares explicit and proximal
descent iterates with the plain Riemannian gradient flow and with the flow of
``E +/- (eta/4)|grad E|^2``.
"""

import numpy as np

from jkoflow import riemannian as rm
from jkoflow.experiments import order_slopes
from jkoflow.fitting import halving

sphere = rm.Sphere(3)
f = rm.sphere_test_objective(0.3)
x0 = sphere.random_point(0)
etas = halving(0.125, 5)

for scheme in ("forward", "backward"):
    rows = rm.order_match_experiment(sphere, f, x0, etas, scheme)
    print(f"{scheme} scheme")
    for r in rows:
        print(f"  eta={r.eta:.6f}  plain {r.err_plain:.3e}  corrected {r.err_modified:.3e}")
    plain, modified = order_slopes(rows)
    print(f"  slopes: plain {plain:.3f}, corrected {modified:.3f}\n")

h = np.diag([1.0, 2.0])
print("effective Hessian at eta = 0.1")
print("  forward :", np.diag(rm.effective_hessian(h, 0.1, "forward")))
print("  backward:", np.diag(rm.effective_hessian(h, 0.1, "backward")))
