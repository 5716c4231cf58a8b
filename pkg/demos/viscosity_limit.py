"""Shrink the viscosity and watch the stress approach the constraint set.

As eps decreases the Perzyna overshoot outside K vanishes while the
boundary residual of the relaxed law levels off at its discretization
floor. Run with ``python demos/viscosity_limit.py``.
"""

from dynplast.audit import entropic_audit, make_samples, relaxed_bc_audit
from dynplast.config import load_scenario
from dynplast.dynamics import solve

print(f"{'eps':>7} {'max dist(sigma, K)':>19} {'relaxed BC residual':>20} {'entropic C':>11}")
for eps in (1e-1, 1e-2, 1e-3):
    scn, opts, _ = load_scenario("plastic_shear", {"solver.eps": eps})
    traj = solve(scn, opts)
    bc = relaxed_bc_audit(traj)
    ent = entropic_audit(traj, make_samples(traj, 20))
    print(f"{eps:7.0e} {bc.max_distance.max():19.3e} {bc.relaxed.max():20.4f} {ent.constant:11.2e}")
