"""
Centroidal and electrostatic landscapes differ
==============================================

With five generators in the unit square, Lloyd's method reaches more than
one centroidal configuration, yet every one of them descends to the same
electrostatic minimum. The two energies share a flavour but not their
minima.
"""

from cvtanneal.energy import centroid_energy, electrostatic_total
from cvtanneal.geometry import random_configuration, tessellate, unit_square
from cvtanneal.laam import same_minimum, signature
from cvtanneal.optimize import lloyd_run, make_rng, polish

square = unit_square()

###############################################################################
# Lloyd survey
# ------------

classes = []
for k in range(60):
    res = lloyd_run(square, random_configuration(square, 5, make_rng(k, 8)), tol=1e-9, max_iter=20000)
    e = centroid_energy(tessellate(square, res.config), res.config)
    sig = signature(res.config, e)
    for c in classes:
        if same_minimum(sig, c["sig"], 1e-2, 1e-4):
            c["count"] += 1
            break
    else:
        classes.append({"sig": sig, "config": res.config, "energy": e, "count": 1})

###############################################################################
# Descend each class on U
# -----------------------

for c in sorted(classes, key=lambda c: c["energy"]):
    u_cvt = electrostatic_total(c["config"].points, square)
    u_min = electrostatic_total(polish(square, c["config"], make_rng(0)).points, square)
    print(f"E={c['energy']:.6f} ({c['count']} restarts): U at the CVT {u_cvt:.5f}, after descent {u_min:.5f}")
