"""Cumulative states count the vehicles that will still pass each cell.

With no inflow the network drains, and z_e(0) = (P x0)_e equals the total
outflow of cell e over the run.
"""

import numpy as np

from fifonet import harness

setup = harness.build_example1()
r = harness.cumulative_flow_check(setup.net, setup.fds, setup.order, setup.initial[2])
print(f"residual density at T: {r.residual:.2e}")
print(" cell      z_e(0)   integral phi_e")
for e in range(setup.net.n):
    print(f"{e + 1:5d} {r.z0[e]:11.4f} {r.integrated[e]:15.4f}")
print(f"max error {np.max(r.error):.2e} (tolerance {r.tol:.2e})")
