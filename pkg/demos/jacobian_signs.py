"""Finite-difference sign check of the Jacobian of the transformed field.

In cumulative coordinates every off-diagonal entry is nonnegative (the field
is cooperative). In the original densities it is not: a congested child
holding back its parent produces negative entries.
"""

from fifonet import harness

setup = harness.build_example1()
args = (setup.net, setup.fds, setup.order, 500)

z = harness.km_finite_difference_check(*args, seed=0)
print(f"z coordinates: {z.n_checked} smooth points, {z.n_skipped} redrawn, "
      f"min off-diagonal {z.min_entry:.3g} (tolerance {z.tol:.2g}) -> {'ok' if z.passed else 'FAIL'}")

x = harness.km_finite_difference_check(*args, seed=0, transformed=False)
i, j = x.argmin
print(f"x coordinates: min off-diagonal {x.min_entry:.3g} at d f_{i} / d x_{j}")
