# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Couplings and their polytope
#
# A coupling of two distributions is a joint distribution with the given
# margins.  The masking game needs two things from the set of couplings:
# whether one avoids some forbidden cells, and the best expected value of a
# linear objective.

# +
from fractions import Fraction as F

import numpy as np

from pmask.core import Dist
from pmask.coupling import CouplingSystem, enumerate_vertices, feasible, find_coupling, maximize
# -

mu = Dist({0: F(1, 2), 1: F(1, 2)})
nu = Dist({0: F(1, 3), 1: F(1, 3), 2: F(1, 3)})
vs = enumerate_vertices(CouplingSystem(mu, nu))
print(len(vs), "vertices")
for v in vs:
    print(dict(v.items()))

# Feasibility is exact max-flow over rationals.  Forbidding the whole first
# column leaves nowhere for its third of the mass.

print(feasible(CouplingSystem(mu, nu, frozenset({(0, 2)}))))
print(feasible(CouplingSystem(mu, nu, frozenset({(0, 0), (1, 0)}))))
print(find_coupling(CouplingSystem(mu, nu, frozenset({(0, 2), (1, 0)}))))

# Linear objectives peak at a vertex.  The simplex answer agrees with brute
# force over the enumerated vertices.

rng = np.random.default_rng(3)
obj = {(r, c): float(rng.normal()) for r in mu.support for c in nu.support}
val, w = maximize(CouplingSystem(mu, nu), obj)
brute = max(sum(float(p) * obj[c] for c, p in v.items()) for v in vs)
print(round(val, 12), round(brute, 12), w in vs)
