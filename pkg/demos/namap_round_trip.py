"""Deform a connection by a projective na(0) map and recover the deformation.

The deformation vector psi is read back from the difference of the two
connections, and the torsion-free projective invariants agree before and after.
A generic symmetric deformation breaks the Weyl-type invariant, which is shown
for contrast.
"""

import numpy as np

from lageom import namap as nm
from lageom.bundle import Geometry, random_polynomial_geometry
from lageom.curvature import random_polynomial_field
from lageom.dconnection import build_connection

geom = Geometry(random_polynomial_geometry(2, 2, seed=4))
A = build_connection(geom, "canonical")
D = geom.dim
u = np.array([0.1, -0.2, 0.15, 0.05])

psi = random_polynomial_field(D, (D,), 1, 0.3)
B = nm.deform(A, nm.projective_deformation(psi))
print("psi(u)       :", psi(u, 0).value)
print("recovered psi:", nm.recover_psi(A, B, u))
print("invariant mismatch under na(0):", nm.invariants(0, A, B, u).max_mismatch)

P = random_polynomial_field(D, (D, D, D), 5, 0.3)
C = nm.deform(A, lambda v, o: (P(v, o) + P(v, o).transpose(0, 2, 1)) * 0.5)
print("W mismatch under a generic deformation:", nm.invariants(0, A, C, u).mismatch["W"])
