"""Solve the shipped shear scenario and read its energy ledger and audits.

Run with ``python demos/plastic_shear.py``.
"""

import numpy as np

from dynplast import audit
from dynplast.config import load_scenario
from dynplast.dynamics import solve

scn, opts, _ = load_scenario("plastic_shear")
traj = solve(scn, opts)
L = traj.ledger

print(f"{traj.mesh.nc} cells, {traj.n_steps} steps, "
      f"at most {max(s['sweeps'] for s in traj.stats)} sweeps per step")
print(f"\n{'t':>5} {'kinetic':>10} {'elastic':>10} {'plastic':>10} {'work':>10} {'residual':>10}")
for i in range(0, traj.n_steps + 1, 20):
    print(f"{traj.times[i]:5.2f} {L.kinetic[i]:10.5f} {L.elastic[i]:10.5f} "
          f"{np.cumsum(L.plastic)[i]:10.5f} {L.work[i]:10.5f} {L.residual[i]:+10.2e}")

yielded = np.any(traj.p[-1] != 0, axis=(1, 2)).mean()
print(f"\nfraction of cells with plastic strain at T: {yielded:.2f}")

checks = (audit.energy_audit(traj).checks() + audit.flow_rule_audit(traj).checks()
          + audit.relaxed_bc_audit(traj).checks(tol=10 * opts.tol_inner))
for c in checks:
    print(f"  {c.name:28s} {'pass' if c.passed else 'FAIL'}  {c.value:.2e}")
