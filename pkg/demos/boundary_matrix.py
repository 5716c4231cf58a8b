"""Build a dissipative boundary matrix for 3D elastodynamics and certify it.

Run with ``python demos/boundary_matrix.py``.
"""

import numpy as np

from dynplast.friedrichs3d import build_M, build_system, verify_admissible, xi_split

system = build_system(lam=1.3, mu=0.8)

# a generic normal keeps the natural pivot block, a coordinate normal needs a permutation
for nu in (np.array([1.0, 2.0, 2.0]) / 3, np.array([0.0, 0.0, 1.0])):
    S1 = np.diag([1.0, 2.0, 0.5])
    S2 = np.array([[0.0, 0.3, 0.0], [-0.3, 0.0, 0.1], [0.0, -0.1, 0.0]])
    bm = build_M(system, nu, S1, S2)
    cert = verify_admissible(system, nu, bm)
    print(f"nu = {np.round(nu, 3)}  permutation is identity: {np.array_equal(bm.C, np.eye(9))}")
    print(f"  min eig M {cert.min_eig:+.1e}  ranks (A+M, A-M) = ({cert.rank_plus}, {cert.rank_minus})"
          f"  admissible: {cert.admissible}")

# split a constant boundary state into the kernel part and the two boundary parts
nu = np.array([1.0, 2.0, 2.0]) / 3
S = np.diag([1.0, 2.0, 0.5])
bm = build_M(system, nu, S)
z = np.array([0.2, -0.1, 0.4])
tau = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.1]])
xs = xi_split(system, bm, z, tau)
print("\nxi split of (z, tau):")
print(f"  M xi+.xi+ = {xs.quad_plus:.6f}   closed form {xs.energy_plus:.6f}")
print(f"  M xi-.xi- = {xs.quad_minus:.6f}   closed form {xs.energy_minus:.6f}")
print(f"  -A xi+.xi+ = {xs.flux_plus:+.6f}   -A xi-.xi- = {xs.flux_minus:+.6f}")
print(f"  largest residual {max(xs.residuals.values()):.1e}")
