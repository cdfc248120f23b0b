"""
Annealing the electrostatic energy
==================================

Metropolis sweeps move one generator at a time and accept uphill moves
with probability exp(-dU/T). A cooling schedule lowers T towards zero.
"""

import numpy as np

from cvtanneal.geometry import random_configuration, unit_square
from cvtanneal.optimize import AnnealParams, Schedule, anneal, make_rng, temperature

square = unit_square()
start = random_configuration(square, 5, make_rng(42))

###############################################################################
# Geometric and logarithmic cooling
# ---------------------------------

geo = Schedule.geometric_with_ratio(2.0, 1500, 1e-8)
log = Schedule("logarithmic", t0=2.0, steps=1500)
for s in (geo, log):
    print(s.kind, [round(temperature(s, t), 5) for t in (0, 10, 100, 1499)])

###############################################################################
# Runs from the same start
# ------------------------
# Logarithmic cooling is far slower: after 1500 sweeps it is still hot,
# so it ends higher than the geometric run. A run at T = 1e-12 is greedy
# descent; the few uphill moves it accepts raise U by amounts of order T,
# far below anything visible in the final energy.

greedy = Schedule("geometric", 1e-12, 1500, alpha=0.999)
for name, s in (("geometric", geo), ("logarithmic", log), ("greedy", greedy)):
    r = anneal(square, start, s, AnnealParams(seed=1, record_every=100))
    print(f"{name:>11}: final U {r.final_energy.total_electrostatic:.6f}, accept rate {r.accept_rate:.3f}, "
          f"step halvings {len(r.std_halvings)}, uphill accepted {r.uphill_accepted}/{r.uphill_proposed}")

###############################################################################
# Where the charges go
# --------------------
# For five charges in the square the minimum of U puts one charge at the
# centre and four on the diagonals.

r = anneal(square, start, geo, AnnealParams(seed=1))
pts = r.final_config.points
print(np.round(pts[np.argsort(np.linalg.norm(pts - 0.5, axis=1))], 4))
