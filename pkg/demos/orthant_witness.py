"""The plain componentwise order is not preserved at a diverge.

Filling one child of a diverge blocks the FIFO diverge, which also starves
its sibling. The witness pair has x <= y, equal density in the sibling, and
a larger inflow to the sibling under x. A short simulation shows x(t)
overtaking y(t) at once.
"""

import numpy as np

from fifonet import harness
from fifonet.sim import SimConfig, simulate_batch

setup = harness.build_example1()
w = harness.orthant_violation_witness(setup.net, setup.fds)
print(f"diverge {w.diverge}, sibling {w.cell}, blocked child {w.blocker}")
print("x =", np.round(w.x, 3))
print("y =", np.round(w.y, 3))
print(f"f_{w.cell}(x) = {w.f_x:.1f} > f_{w.cell}(y) = {w.f_y:.1f}")

t = harness.orthant_order_loss(setup.net, setup.fds, w, SimConfig(dt=1e-4, horizon=0.2, record_every=1))
print("componentwise order first lost at t =", t)

# The same pair is ordered in cumulative coordinates, and stays ordered.
cfg = SimConfig(dt=1e-4, horizon=0.2)
print("cone relation of (y, x):", setup.order.compare(w.y, w.x).relation.name)
runs = simulate_batch(setup.net, setup.fds, np.array([w.y, w.x]), cfg)
kept = harness.order_preservation(setup.order, runs[0], runs[1], 1e-9 * setup.order.to_z(w.y).max())
print("cone order kept along the run:", kept.passed)
