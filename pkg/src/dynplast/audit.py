"""Post-hoc checks of discrete trajectories.

Every audit is a pure function of a :class:`~dynplast.dynamics.Trajectory`.
Space integrals use the quadrature of the solver (consistent mass, cellwise
constants, facet midpoints) and time derivatives are backward differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dynplast.convex_sets import StressConstraint, project_neg_K_nu, psi
from dynplast.dynamics import EnergyLedger, Trajectory, energy_ledger, perzyna_residual
from dynplast.fem import boundary_matrix, mass_matrix
from dynplast.tensor_core import ddot, frob, sym_prod


@dataclass
class Check:
    """One pass/fail line of an audit report."""

    name: str
    tolerance: float
    value: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "tolerance": float(self.tolerance),
                "value": float(self.value), "pass": bool(self.passed)}


# ---------------------------------------------------------------- energy

@dataclass
class EnergyReport:
    """Signed energy-balance residual and its ingredients.

    ``residual[i] = E_i + D_i - E_0 - W_i`` where ``E`` is kinetic plus
    elastic energy, ``D`` the cumulative dissipation (plastic, boundary and
    both viscous terms) and ``W`` the cumulative work of the body force and
    the boundary datum.
    """

    ledger: EnergyLedger
    residual: np.ndarray
    scale: float
    max_abs: float
    max_positive: float
    consistency: float
    max_step_increase: float

    @property
    def relative(self) -> float:
        return self.max_abs / self.scale

    def checks(self, tol: float = 1e-8) -> list:
        return [
            Check("energy_ledger_consistency", tol, self.consistency / self.scale,
                  self.consistency <= tol * self.scale),
            Check("energy_residual_sign", tol, self.max_step_increase / self.scale,
                  self.max_step_increase <= tol * self.scale),
        ]


def energy_scale(ledger: EnergyLedger) -> float:
    terms = [np.abs(ledger.mechanical).max(), np.abs(ledger.work).max(),
             np.abs(ledger.dissipation).max()]
    return max(max(terms), 1e-300)


def energy_audit(traj: Trajectory) -> EnergyReport:
    """Rebuild every energy term from the fields and compare with the stored ledger."""
    if traj.ledger is None:
        raise ValueError("trajectory has no energy ledger")
    fresh = energy_ledger(traj)
    stored = traj.ledger
    consistency = max(float(np.abs(a - b).max()) for a, b in
                      zip(fresh.as_columns().values(), stored.as_columns().values()))
    res = fresh.residual
    # the elastic first step is not a minimization step; the per-step
    # inequality holds from the first incremental step on
    first = 2 if traj.options.first_step == "elastic" else 1
    inc = np.diff(res)[first - 1:]
    return EnergyReport(
        ledger=fresh,
        residual=res,
        scale=energy_scale(fresh),
        max_abs=float(np.abs(res).max()),
        max_positive=float(max(res.max(), 0.0)),
        consistency=consistency,
        max_step_increase=float(max(inc.max(), 0.0)) if len(inc) else 0.0,
    )


# ---------------------------------------------------------------- flow rule

@dataclass
class FlowRuleReport:
    """Discrete flow rule diagnostics per step (entry 0 unused).

    ``overshoot = sigma:dp - H(dp)`` should equal ``(eps/delta)|dp|^2``;
    ``hill = H(dp) - P_K(sigma):dp`` is nonnegative by convexity and zero when
    the increment is normal to ``K`` at the projected stress.
    ``constitutive`` is the largest ``|sigma - A e|`` over all cells and steps.
    """

    min_overshoot: np.ndarray
    overshoot_sum: np.ndarray
    viscous_bound: np.ndarray
    min_hill: np.ndarray
    max_normality: np.ndarray
    perzyna: np.ndarray
    stress_scale: float
    max_distance: np.ndarray
    constitutive: float = 0.0

    def checks(self, tol: float = 1e-8) -> list:
        s = self.stress_scale
        incr = max(float(np.max(self.viscous_bound)), 1e-300)
        return [
            Check("flow_rule_overshoot_sign", tol, float(-self.min_overshoot.min()) / s,
                  self.min_overshoot.min() >= -tol * s),
            Check("flow_rule_viscous_bound", tol,
                  float(np.max(self.overshoot_sum - self.viscous_bound)) / incr,
                  np.all(self.overshoot_sum <= self.viscous_bound + tol * incr)),
            Check("flow_rule_hill", tol, float(-self.min_hill.min()) / s,
                  self.min_hill.min() >= -tol * s),
            Check("perzyna_identity", tol, float(self.perzyna.max()) / s,
                  self.perzyna.max() <= tol * s),
            Check("constitutive_law", tol, self.constitutive / s, self.constitutive <= tol * s),
        ]


def flow_rule_audit(traj: Trajectory, K: StressConstraint | None = None) -> FlowRuleReport:
    K = traj.scenario.K if K is None else K
    o = traj.options
    n = traj.n_steps
    out = {k: np.zeros(n + 1) for k in
           ("min_overshoot", "overshoot_sum", "viscous_bound", "min_hill",
            "max_normality", "perzyna", "max_distance")}
    scale = max(K.r_inner, float(frob(traj.sigma).max()))
    for i in range(1, n + 1):
        sig = traj.sigma[i]
        dp = traj.p[i] - traj.p[i - 1]
        proj = K.project(sig)
        h = K.support(dp)
        # strain increments are stress / stiffness sized; express gaps as stress
        dpn = max(float(frob(dp).max()), 1e-300)
        over = ddot(sig, dp) - h
        hill = h - ddot(proj, dp)
        out["min_overshoot"][i] = over.min() / dpn
        out["overshoot_sum"][i] = over.sum()
        out["viscous_bound"][i] = (o.eps / o.delta) * ddot(dp, dp).sum()
        out["min_hill"][i] = hill.min() / dpn
        out["max_normality"][i] = np.abs(hill).max() / dpn
        # Perzyna residual is a strain; convert with the stress/strain ratio eps/delta
        out["perzyna"][i] = (o.eps / o.delta) * perzyna_residual(K, sig, dp, o.eps, o.delta).max()
        out["max_distance"][i] = K.distance(sig).max()
    constitutive = float(frob(traj.sigma - traj.scenario.hooke.apply(traj.e)).max())
    return FlowRuleReport(stress_scale=scale, constitutive=constitutive, **out)


# ---------------------------------------------------------------- boundary

@dataclass
class BoundaryReport:
    """Per-step boundary residuals in the boundary L2 norm (entry 0 is the initial state).

    ``relaxed``: ``P_{-K nu}(S v) + (sigma + eps E v) nu`` with the cell traction.
    ``exact``: residual of ``S v + (sigma + eps E v) nu = g_eps`` with the
    traction recovered consistently from the discrete equation of motion.
    ``direct``: the same law evaluated with the cell traction.
    """

    relaxed: np.ndarray
    exact: np.ndarray
    direct: np.ndarray
    g_norm: float
    traction_scale: float
    max_distance: np.ndarray

    def checks(self, tol: float = 1e-8) -> list:
        s = self.traction_scale
        return [Check("exact_boundary_condition", tol, float(self.exact[1:].max()) / s,
                      self.exact[1:].max() <= tol * s)]


def _boundary_l2(mesh, values) -> float:
    return float(np.sqrt(np.sum(mesh.facet_measure * np.sum(values**2, axis=-1))))


def _boundary_dofs(mesh) -> np.ndarray:
    nodes = np.unique(mesh.facets)
    return (nodes[:, None] * mesh.dim + np.arange(mesh.dim)).ravel()


def boundary_mass(mesh) -> sp.csc_matrix:
    """Boundary mass matrix restricted to the boundary dofs."""
    bd = _boundary_dofs(mesh)
    mb = boundary_matrix(mesh, np.repeat(np.eye(mesh.dim)[None], mesh.nf, axis=0)).tocsc()
    return mb[bd][:, bd]


def consistent_traction_residual(traj: Trajectory, i: int, mbb=None):
    """Nodal boundary residual of the discrete boundary law at step ``i``.

    The traction is the boundary functional left over by the discrete
    equation of motion, mapped to nodal values with the boundary mass.

    Returns
    -------
    t : ndarray
        Residual of ``S v + traction - g_eps`` at the boundary dofs.
    interior : float
        Largest residual of the equation of motion at interior dofs.
    mbb : sparse
        Boundary mass used, for computing norms.
    """
    ops, o, mesh = traj.ops, traj.options, traj.mesh
    ev = ops.strain_of(traj.v[i])
    r = (ops.mass @ (traj.v[i] - traj.v[i - 1]) / o.delta
         + ops.stress_divergence(traj.sigma[i] + o.eps * ev) - traj.load(i))
    e = r + ops.boundary @ traj.v[i] - traj.boundary_load()
    bd = _boundary_dofs(mesh)
    interior = np.setdiff1d(np.arange(mesh.ndof), bd)
    mbb = boundary_mass(mesh) if mbb is None else mbb
    t = spla.spsolve(mbb, e[bd])
    return t, (float(np.abs(e[interior]).max()) if len(interior) else 0.0), mbb


def relaxed_bc_audit(traj: Trajectory) -> BoundaryReport:
    scn, o, mesh, ops = traj.scenario, traj.options, traj.mesh, traj.ops
    n = traj.n_steps
    S = scn.law.per_facet(mesh.nf)
    relaxed = np.zeros(n + 1)
    exact = np.zeros(n + 1)
    direct = np.zeros(n + 1)
    tmax = 0.0
    mbb = boundary_mass(mesh)
    for i in range(n + 1):
        v = traj.facet_velocity(i)
        t = traj.facet_traction(i)
        sv = np.einsum("fij,fj->fi", S, v)
        proj = np.array([project_neg_K_nu(S[f], scn.K, mesh.normals[f], sv[f])
                         for f in range(mesh.nf)])
        relaxed[i] = _boundary_l2(mesh, proj + t)
        direct[i] = _boundary_l2(mesh, sv + t - traj.g_eps)
        tmax = max(tmax, _boundary_l2(mesh, t), _boundary_l2(mesh, sv))
        if i >= 1:
            tb, _, _ = consistent_traction_residual(traj, i, mbb)
            exact[i] = float(np.sqrt(max(tb @ (mbb @ tb), 0.0)))
    dist = np.array([scn.K.distance(s).max() for s in traj.sigma])
    return BoundaryReport(relaxed, exact, direct, _boundary_l2(mesh, traj.g_eps),
                          max(tmax, 1e-300), dist)


# ---------------------------------------------------------------- test functions

@dataclass(frozen=True)
class TimeRamp:
    """``1`` on ``[0, t1]``, linear down to ``0`` at ``t2``, ``0`` afterwards."""

    t1: float
    t2: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.t2 <= self.t1:
            return np.where(t <= self.t1, 1.0, 0.0)
        return np.clip((self.t2 - t) / (self.t2 - self.t1), 0.0, 1.0)


@dataclass(frozen=True)
class SpaceBump:
    """``(1 - |x - c|^2 / r^2)_+^2``, or the constant 1 when ``center`` is ``None``."""

    center: tuple | None = None
    radius: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.center is None:
            return np.ones(x.shape[:-1])
        s = 1.0 - np.sum((x - np.asarray(self.center))**2, axis=-1) / self.radius**2
        return np.maximum(s, 0.0) ** 2

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.center is None:
            return np.zeros_like(x)
        d = x - np.asarray(self.center)
        s = 1.0 - np.sum(d**2, axis=-1) / self.radius**2
        return (-4.0 * np.maximum(s, 0.0) / self.radius**2)[..., None] * d


@dataclass
class EntropySample:
    """Test tuple ``(z, tau, phi = ramp(t) * bump(x))`` and its evaluated slack."""

    z: np.ndarray
    tau: np.ndarray
    ramp: TimeRamp
    bump: SpaceBump
    slack: float = float("nan")
    scale: float = float("nan")
    terms: dict = field(default_factory=dict)


def _weighted_mass(traj: Trajectory, chi_cells: np.ndarray):
    # consistent mass with each cell weighted by chi at its centroid
    if np.all(chi_cells == 1.0):
        return traj.ops.mass
    return mass_matrix(traj.mesh, chi_cells)


def entropic_slack(traj: Trajectory, sample: EntropySample) -> EntropySample:
    """Evaluate the entropic-dissipative inequality for one test tuple.

    The time integral of ``g d_t phi`` is summed by parts,
    ``sum_i (psi_i - psi_{i-1}) G_i + psi_0 G_0``, and every other term of
    step ``i`` is weighted by ``delta psi_{i-1}``.
    """
    scn, o, mesh, ops = traj.scenario, traj.options, traj.mesh, traj.ops
    hooke = scn.hooke
    if not scn.K.contains(sample.tau, tol=1e-12):
        raise ValueError("tau must lie in K")
    n = traj.n_steps
    psi_t = sample.ramp(traj.times)
    cents = mesh.cell_centroids
    chi_c = sample.bump(cents)
    grad_c = sample.bump.gradient(cents)
    chi_f = sample.bump(mesh.facet_midpoints)
    m_chi = _weighted_mass(traj, chi_c)
    Z = np.tile(sample.z, mesh.nv)
    vol = mesh.volumes

    ds = traj.sigma - sample.tau
    stress_part = (ddot(hooke.inverse_apply(ds), ds) * chi_c) @ vol
    dv = traj.v - Z
    kin_part = np.einsum("ij,ij->i", dv, (m_chi @ dv.T).T)
    G = kin_part + stress_part

    time_term = float(np.sum((psi_t[1:] - psi_t[:-1]) * G[1:]) + psi_t[0] * G[0])
    w = o.delta * psi_t[:-1]
    flux = np.zeros(n)
    force = np.zeros(n)
    vcell = traj.v.reshape(n + 1, mesh.nv, mesh.dim)[:, mesh.cells].mean(axis=2)
    for i in range(1, n + 1):
        sym = sym_prod(vcell[i] - sample.z, grad_c)
        flux[i - 1] = -2.0 * (ddot(ds[i], sym) @ vol)
        f_nodal = scn.body_force(traj.times[i - 1]).reshape(-1)
        force[i - 1] = 2.0 * f_nodal @ (m_chi @ dv[i])
    S = scn.law.per_facet(mesh.nf)
    wb = np.einsum("ij,fj->fi", sample.tau, mesh.normals) + np.einsum("fij,j->fi", S, sample.z)
    bflux = 0.5 * np.sum(mesh.facet_measure * chi_f
                         * np.einsum("fi,fi->f", np.linalg.solve(S, wb[..., None])[..., 0], wb))
    terms = {
        "time": time_term,
        "flux": float(w @ flux),
        "force": float(w @ force),
        "boundary": float(w.sum() * bflux),
    }
    sample.terms = terms
    sample.slack = float(sum(terms.values()))
    sample.scale = max(float(np.abs(G).max()), float(abs(w.sum() * bflux)), 1e-300)
    return sample


def energy_inequality_slack(traj: Trajectory, ramp: TimeRamp) -> float:
    """``2 sum_i psi_{i-1} (W_i - (E_i - E_{i-1}))`` from the energy ledger.

    Equals :func:`entropic_slack` with ``(z, tau) = (0, 0)`` and a constant
    space factor when the ramp vanishes at the final time.
    """
    L = traj.ledger
    psi_t = ramp(traj.times)
    dE = np.diff(L.mechanical)
    return float(2.0 * np.sum(psi_t[:-1] * (L.work_force[1:] - dE)))


def make_samples(traj: Trajectory, n: int = 100, seed: int = 0) -> list:
    """The fixed sample family used by :func:`entropic_audit`.

    ``tau`` is ``0.999`` times the projection onto ``K`` of a Gaussian tensor
    of twice the stress scale; ``z`` is Gaussian with the velocity scale;
    the time ramp has ``t1 ~ U(0, T/2)``, ``t2 ~ U(t1, T)``; the space
    factor is the constant 1 for even sample indices and a bump with
    uniform center in the bounding box and radius ``U(0.2, 0.6)`` times the
    diameter otherwise.
    """
    rng = np.random.default_rng(seed)
    scn, mesh = traj.scenario, traj.mesh
    dim = mesh.dim
    T = traj.times[-1]
    s_scale = max(scn.K.r_inner, float(frob(traj.sigma).max()))
    v_scale = max(float(np.abs(traj.v).max()), 1e-12)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    out = []
    for k in range(n):
        g = rng.normal(size=(dim, dim))
        tau = 0.999 * scn.K.project(s_scale * (g + g.T))
        z = v_scale * rng.normal(size=dim)
        t1 = rng.uniform(0, 0.5 * T)
        t2 = rng.uniform(t1, T)
        if k % 2 == 0:
            bump = SpaceBump()
        else:
            bump = SpaceBump(tuple(rng.uniform(lo, hi)), rng.uniform(0.2, 0.6) * diam)
        out.append(EntropySample(z, tau, TimeRamp(t1, t2), bump))
    return out


@dataclass
class EntropicReport:
    samples: list
    min_slack: float
    constant: float

    def checks(self, C: float = 10.0) -> list:
        return [Check("entropic_constant", C, self.constant, self.constant <= C)]


def entropic_audit(traj: Trajectory, samples: list | None = None) -> EntropicReport:
    """Evaluate every sample; ``constant`` is ``max(-slack / ((delta + eps) scale))``."""
    samples = make_samples(traj) if samples is None else samples
    o = traj.options
    out = [entropic_slack(traj, s) for s in samples]
    worst = min(s.slack for s in out)
    C = max(max(-s.slack / ((o.delta + o.eps) * s.scale) for s in out), 0.0)
    return EntropicReport(out, worst, C)


# ---------------------------------------------------------------- convexity

@dataclass
class ConvexityReport:
    """Per-step residual of the plastic-boundary convexity inequality and its scale."""

    residual: np.ndarray
    scale: np.ndarray

    @property
    def min_relative(self) -> float:
        return float(np.min(self.residual[1:] / self.scale[1:]))

    def checks(self, C: float = 10.0, eps_delta: float = 0.0) -> list:
        bound = C * eps_delta
        return [Check("convexity_inequality", bound, -self.min_relative,
                      self.min_relative >= -bound)]


def convexity_inequality_audit(traj: Trajectory, bump: SpaceBump | None = None) -> ConvexityReport:
    """Residual of ``int chi (H(p') - sigma:p') + int_dO chi (psi(v) + S^-1 sigma nu.sigma nu / 2
    + sigma nu.v) >= 0`` at each step, with ``p' = dp/delta`` and cell tractions.
    """
    bump = SpaceBump() if bump is None else bump
    scn, o, mesh = traj.scenario, traj.options, traj.mesh
    S = scn.law.per_facet(mesh.nf)
    chi_c = bump(mesh.cell_centroids)
    chi_f = bump(mesh.facet_midpoints)
    vol = mesh.volumes * chi_c
    meas = mesh.facet_measure * chi_f
    n = traj.n_steps
    res = np.zeros(n + 1)
    scale = np.ones(n + 1)
    for i in range(1, n + 1):
        sig = traj.sigma[i]
        rate = (traj.p[i] - traj.p[i - 1]) / o.delta
        interior = (scn.K.support(rate) - ddot(sig, rate)) @ vol
        v = traj.facet_velocity(i)
        t = np.einsum("fij,fj->fi", sig[mesh.facet_cells], mesh.normals)
        sinv_t = np.linalg.solve(S, t[..., None])[..., 0]
        ps = np.array([psi(S[f], scn.K, mesh.normals[f], v[f]) for f in range(mesh.nf)])
        bnd = (ps + 0.5 * np.einsum("fi,fi->f", sinv_t, t) + np.einsum("fi,fi->f", t, v)) @ meas
        res[i] = interior + bnd
        sv = np.einsum("fij,fj->fi", S, v)
        scale[i] = max(float(np.abs(ddot(sig, rate)) @ vol)
                       + float((np.einsum("fi,fi->f", sv, v)
                                + np.einsum("fi,fi->f", sinv_t, t)) @ meas), 1e-300)
    return ConvexityReport(res, scale)


def report_dict(checks: list) -> dict:
    return {"checks": [c.as_dict() for c in checks],
            "pass": all(c.passed for c in checks)}
