"""The boundary dissipation potential psi for a von Mises and a ball constraint.

Shows how psi interpolates between the quadratic law ``S z.z / 2`` for
small velocities and linear growth once the traction saturates.
Run with ``python demos/boundary_dissipation.py``.
"""

import numpy as np

from dynplast.convex_sets import Ball, VonMisesCylinder, infconv_minimizer, psi, psi_grad

S = np.diag([1.0, 2.0])
nu = np.array([1.0, 0.0])
direction = np.array([0.6, 0.8])

print(f"{'|z|':>6} {'S z.z/2':>10} {'psi ball':>10} {'psi VM':>10} {'|grad| VM':>10}")
for r in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0):
    z = r * direction
    ball, vm = Ball(0.3, 2), VonMisesCylinder(0.3, 2)
    print(f"{r:6.2f} {0.5 * z @ S @ z:10.5f} {psi(S, ball, nu, z):10.5f} "
          f"{psi(S, vm, nu, z):10.5f} {np.linalg.norm(psi_grad(S, vm, nu, z)):10.5f}")

# the von Mises set leaves the normal traction free, so the split point is tangential
z = 2.0 * direction
zbar = infconv_minimizer(S, VonMisesCylinder(0.3, 2), nu, z)
print(f"\nsplit point for |z| = 2: zbar = {np.round(zbar, 4)}, normal part {zbar @ nu:.1e}")
