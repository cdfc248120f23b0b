"""
Electrostatic energy and its second variation
=============================================

The electrostatic energy U combines pairwise 1/r repulsion with the
attraction of a uniform boundary charge that neutralises the generators.
Here we check the boundary integral against a closed form, then look at
Hessian spectra at Lloyd fixed points.
"""

import math

from cvtanneal.energy import (
    Quadrature,
    boundary_potential,
    electrostatic_total,
    second_variation_checks,
)
from cvtanneal.geometry import random_configuration, unit_square
from cvtanneal.optimize import lloyd_run, make_rng

square = unit_square()

###############################################################################
# Boundary potential at the centre
# --------------------------------
# A straight segment of charge gives asinh terms in closed form; at the
# centre of the unit square with unit total charge the four edges add up
# to 2 ln(1 + sqrt 2).

exact = 2 * math.log(1 + math.sqrt(2))
for k in (2, 4, 8, 32):
    v = boundary_potential((0.5, 0.5), square, 1, Quadrature(k))
    print(f"{k:>2} nodes per edge: {v:.15f}  error {abs(v - exact):.1e}")

###############################################################################
# Close to the wall the integrand is sharply peaked, so low orders suffer
# --------------------------------------------------------------------------

for d in (0.2, 0.05, 0.01):
    lo = boundary_potential((d, 0.5), square, 1, Quadrature(8))
    hi = boundary_potential((d, 0.5), square, 1, Quadrature(128))
    print(f"distance {d}: order 8 vs 128 differ by {abs(lo - hi):.1e}")

###############################################################################
# Hessian spectra at CVTs
# -----------------------
# The centroidal energy is locally convex at every Lloyd fixed point we
# try. The edge energy is checked with shared-edge lengths frozen. U is a
# different story: from two generators on, the CVT is a saddle of U, and
# the offending eigenvector shows the direction in which U decreases.

for n in range(1, 6):
    res = lloyd_run(square, random_configuration(square, n, make_rng(0, (2 << 32))), tol=1e-10, max_iter=20000)
    checks, live = second_variation_checks(square, res.config)
    row = ", ".join(f"{c.name} {c.projected_min:+.3g}{'' if c.passed else ' (fails)'}" for c in checks)
    print(f"N={n}: {row}")
    bad = [c for c in checks if not c.passed]
    if bad:
        v = bad[0].offending_vector.reshape(-1, 2)
        x = res.config.points
        u0 = electrostatic_total(x, square)
        step = min(electrostatic_total(x + s * v, square) for s in (-0.02, 0.02))
        print(f"      moving along the offending mode lowers U from {u0:.6f} to {step:.6f}")
