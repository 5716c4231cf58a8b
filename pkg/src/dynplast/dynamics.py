"""Incremental time stepping for visco-regularized dynamic perfect plasticity.

Each step minimizes, over the displacement ``u`` and plastic strain ``q``,

    sum_c |c| [Q(Eu - q) + H(q - p_prev) + eps/(2 delta) (|Eu - Eu_prev|^2 + |q - p_prev|^2)]
    + |u - 2 u_prev + u_prev2|^2_M / (2 delta^2) + |u - u_prev|^2_B / (2 delta)
    - (F + G_eps) . u

by alternating an exact linear solve in ``u`` with an exact cellwise prox in
``q``. Every sweep ends with the ``q`` update, so the discrete viscoplastic
flow rule ``q - p_prev = (delta/eps) (sigma - P_K sigma)`` holds to round-off.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from dynplast.convex_sets import (
    Ball, BoundaryLaw, StressConstraint, VonMisesCylinder, secular_root,
)
from dynplast.fem import Mesh, Operators, assemble_operators, strain
from dynplast.tensor_core import Hooke, ddot, dev, frob, sph

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Scenario data violates a hypothesis of the model.

    Attributes
    ----------
    check : str
        Name of the failed check.
    residual : float
        Size of the violation.
    """

    def __init__(self, check: str, message: str, residual: float = float("nan")):
        super().__init__(f"[{check}] {message}")
        self.check = check
        self.residual = residual


class SolverError(RuntimeError):
    """An inner iteration failed to converge; the message carries the residual."""


@dataclass
class Scenario:
    """Complete problem data on a mesh.

    ``u0``, ``v0`` are nodal ``(nv, dim)`` arrays, ``e0``, ``p0`` cellwise
    ``(nc, dim, dim)`` arrays. ``force(t)`` returns nodal body-force values
    ``(nv, dim)``; ``None`` means no body force.
    """

    mesh: Mesh
    hooke: Hooke
    K: StressConstraint
    law: BoundaryLaw
    u0: np.ndarray
    v0: np.ndarray
    e0: np.ndarray
    p0: np.ndarray
    force: Callable[[float], np.ndarray] | None = None

    def body_force(self, t: float) -> np.ndarray:
        if self.force is None:
            return np.zeros((self.mesh.nv, self.mesh.dim))
        return np.asarray(self.force(t), dtype=float).reshape(self.mesh.nv, self.mesh.dim)


@dataclass
class SolverOptions:
    """Time discretization and inner-iteration controls.

    Parameters
    ----------
    first_step : {"elastic", "plastic"}
        ``elastic`` advances the first step as ``(u, e, p) + delta (v0, Ev0, 0)``;
        ``plastic`` runs the ordinary incremental step with the ghost state
        ``u0 - delta v0``.
    """

    delta: float
    T: float
    eps: float
    tol_inner: float = 1e-10
    max_sweeps: int = 500
    first_step: str = "elastic"
    prox_tol: float = 1e-14
    prox_max_iter: int = 10000

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("time_step", f"delta must be positive, got {self.delta}")
        if not self.eps > 0:
            raise ConfigError("viscosity", f"eps must be positive, got {self.eps}")
        if not self.T > 0:
            raise ConfigError("time_step", f"T must be positive, got {self.T}")
        if self.first_step not in ("elastic", "plastic"):
            raise ConfigError("first_step", f"unknown first step '{self.first_step}'")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.delta))


def compatibility_residuals(scn: Scenario) -> dict:
    """Residuals of the initial-data hypotheses.

    ``strain_split``: ``|E u0 - e0 - p0|``; ``stress_admissible``: distance of
    ``A e0`` to ``K``; ``boundary``: ``|S v0 + sigma0 nu|`` on the facets.
    """
    mesh = scn.mesh
    eu0 = strain(mesh, scn.u0)
    sigma0 = scn.hooke.apply(scn.e0)
    v0f = scn.v0[mesh.facets].mean(axis=1)
    S = scn.law.per_facet(mesh.nf)
    traction = np.einsum("fij,fj->fi", sigma0[mesh.facet_cells], mesh.normals)
    bc = np.einsum("fij,fj->fi", S, v0f) + traction
    return {
        "strain_split": float(np.abs(eu0 - scn.e0 - scn.p0).max()),
        "stress_admissible": float(np.max(scn.K.distance(sigma0))),
        "boundary": float(np.linalg.norm(bc, axis=1).max()) if mesh.nf else 0.0,
    }


def check_compatibility(scn: Scenario, tol: float = 1e-8) -> dict:
    """Raise :class:`ConfigError` naming the first violated initial-data check."""
    res = compatibility_residuals(scn)
    scale = max(1.0, float(np.abs(scn.hooke.apply(scn.e0)).max()))
    messages = {
        "strain_split": "initial strains must satisfy E u0 = e0 + p0",
        "stress_admissible": "initial stress A e0 must lie in K",
        "boundary": "initial data must satisfy S v0 + sigma0 nu = 0 on the boundary",
    }
    for name, val in res.items():
        if val > tol * scale:
            raise ConfigError(name, f"{messages[name]} (residual {val:.3e})", val)
    return res


def _b_inverse(hooke: Hooke, kappa: float, s: np.ndarray) -> np.ndarray:
    # (A + kappa I)^-1 on symmetric tensors
    return dev(s) / (2 * hooke.mu + kappa) + sph(s) / (hooke.bulk + kappa)


def plastic_prox(K: StressConstraint, hooke: Hooke, e_total: np.ndarray, p_prev: np.ndarray,
                 eps: float, delta: float, tol: float = 1e-14, max_iter: int = 10000):
    """Cellwise minimizer over ``q`` of
    ``Q(e_total - q) + H(q - p_prev) + eps/(2 delta) |q - p_prev|^2``.

    Solved through the dual problem: with ``B = A + (eps/delta) I`` and the
    trial stress ``s_tr = A(e_total - p_prev)``, the increment is
    ``B^-1 (s_tr - tau)`` where ``tau`` is the ``B^-1``-metric projection of
    ``s_tr`` onto ``K``.

    Returns
    -------
    q, sigma : ndarray, shape (..., n, n)
        New plastic strain and stress ``A(e_total - q)``.

    Raises
    ------
    SolverError
        If the iterative route for a general ``K`` does not converge.
    """
    e_total = np.asarray(e_total, dtype=float)
    p_prev = np.asarray(p_prev, dtype=float)
    kappa = eps / delta
    s_tr = hooke.apply(e_total - p_prev)
    wd = 1.0 / (2 * hooke.mu + kappa)
    ws = 1.0 / (hooke.bulk + kappa)
    inc = np.zeros_like(s_tr)
    if isinstance(K, VonMisesCylinder):
        d = dev(s_tr)
        nd = frob(d)
        out = nd > K.k
        scale = np.where(out, 1.0 - K.k / np.maximum(nd, 1e-300), 0.0)
        inc = wd * d * scale[..., None, None]
    elif isinstance(K, Ball):
        out = frob(s_tr) > K.radius
        if np.any(out):
            d = dev(s_tr[out])
            m = sph(s_tr[out])
            nd, nm = frob(d), frob(m)
            h = np.stack([np.full(nd.shape, wd), np.full(nm.shape, ws)], axis=-1)
            c = np.stack([wd * nd, ws * nm], axis=-1)
            t = secular_root(h, c, K.radius)[..., None, None]
            # s_tr - tau with tau = (W + t)^-1 W s_tr, then B^-1
            inc[out] = wd * d * (t / (wd + t)) + ws * m * (t / (ws + t))
    else:
        out = ~K.contains(s_tr, tol=0.0)
        if np.any(out):
            inc[out] = _general_prox_increment(K, hooke, kappa, s_tr[out], tol, max_iter)
    q = p_prev + inc
    return q, hooke.apply(e_total - q)


def _general_prox_increment(K, hooke, kappa, s_tr, tol, max_iter):
    # projected gradient for min over tau in K of (s_tr - tau):B^-1(s_tr - tau)/2
    wd = 1.0 / (2 * hooke.mu + kappa)
    ws = 1.0 / (hooke.bulk + kappa)
    step = 1.0 / max(wd, ws)
    tau = K.project(s_tr)
    for _ in range(max_iter):
        tau_new = K.project(tau + step * _b_inverse(hooke, kappa, s_tr - tau))
        change = np.max(frob(tau_new - tau))
        tau = tau_new
        if change <= tol * max(1.0, float(np.max(frob(s_tr)))):
            break
    else:
        raise SolverError(f"plastic prox did not converge in {max_iter} iterations "
                          f"(last stress change {change:.2e})")
    return _b_inverse(hooke, kappa, s_tr - tau)


@dataclass
class EnergyLedger:
    """Per-step energy terms of a trajectory.

    Increment arrays have entry 0 equal to zero; entry ``i`` is the
    contribution of step ``i``.
    """

    kinetic: np.ndarray
    elastic: np.ndarray
    plastic: np.ndarray
    boundary: np.ndarray
    visc_strain: np.ndarray
    visc_plastic: np.ndarray
    work_force: np.ndarray
    work_boundary: np.ndarray

    @property
    def mechanical(self) -> np.ndarray:
        return self.kinetic + self.elastic

    @property
    def dissipation(self) -> np.ndarray:
        return np.cumsum(self.plastic + self.boundary + self.visc_strain + self.visc_plastic)

    @property
    def work(self) -> np.ndarray:
        return np.cumsum(self.work_force + self.work_boundary)

    @property
    def residual(self) -> np.ndarray:
        """``E(t) + D(t) - E(0) - W(t)``; nonpositive up to solver tolerance."""
        return self.mechanical - self.mechanical[0] + self.dissipation - self.work

    def as_columns(self) -> dict:
        return {
            "kinetic": self.kinetic, "elastic": self.elastic,
            "plastic_dissipation": self.plastic, "boundary_dissipation": self.boundary,
            "viscous_strain": self.visc_strain, "viscous_plastic": self.visc_plastic,
            "work_force": self.work_force, "work_boundary": self.work_boundary,
            "residual": self.residual,
        }


@dataclass
class Trajectory:
    """Discrete solution at times ``t_i = i delta``, ``i = 0..N``.

    ``u``, ``v`` have shape ``(N+1, ndof)``; ``e``, ``p``, ``sigma`` have
    shape ``(N+1, nc, dim, dim)``. ``v[i] = (u[i] - u[i-1]) / delta`` for
    ``i >= 1``.
    """

    scenario: Scenario
    options: SolverOptions
    ops: Operators = field(repr=False)
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    e: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    g_eps: np.ndarray
    stats: list
    ledger: EnergyLedger | None = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def mesh(self) -> Mesh:
        return self.scenario.mesh

    def facet_velocity(self, i: int) -> np.ndarray:
        return self.ops.facet_values(self.v[i])

    def facet_traction(self, i: int) -> np.ndarray:
        """Cell traction ``(sigma + eps E v) nu`` on each boundary facet."""
        mesh = self.mesh
        ev = self.ops.strain_of(self.v[i])
        s = self.sigma[i] + self.options.eps * ev
        return np.einsum("fij,fj->fi", s[mesh.facet_cells], mesh.normals)

    def load(self, i: int) -> np.ndarray:
        """Assembled body-force vector used in step ``i`` (evaluated at ``t_{i-1}``)."""
        return self.ops.load_vector(self.scenario.body_force(self.times[max(i - 1, 0)]))

    def boundary_load(self) -> np.ndarray:
        return self.ops.boundary_load(self.g_eps)


def boundary_datum(scn: Scenario, eps: float) -> np.ndarray:
    """Facetwise ``g_eps = eps E v0 nu``."""
    mesh = scn.mesh
    ev0 = strain(mesh, scn.v0)
    return eps * np.einsum("fij,fj->fi", ev0[mesh.facet_cells], mesh.normals)


class Stepper:
    """Alternating-minimization stepper with a single factorization of the ``u`` block."""

    def __init__(self, scn: Scenario, opts: SolverOptions):
        self.scn = scn
        self.opts = opts
        mesh = scn.mesh
        self.ops = assemble_operators(mesh, scn.hooke, scn.law.per_facet(mesh.nf))
        d, eps = opts.delta, opts.eps
        ops = self.ops
        self.system = (ops.stiffness + (eps / d) * ops.viscosity
                       + ops.mass / d**2 + ops.boundary / d).tocsc()
        self._solve = spla.factorized(self.system)
        self.g_eps = boundary_datum(scn, eps)
        self.G = ops.boundary_load(self.g_eps)

    def functional(self, u, q, u1, u2, eu1, p1, F) -> float:
        ops, scn, o = self.ops, self.scn, self.opts
        vol = scn.mesh.volumes
        eu = ops.strain_of(u)
        a = u - 2 * u1 + u2
        du = u - u1
        cell = (scn.hooke.quadratic_form(eu - q) + scn.K.support(q - p1)
                + o.eps / (2 * o.delta) * (ddot(eu - eu1, eu - eu1) + ddot(q - p1, q - p1)))
        return float(vol @ cell + a @ (ops.mass @ a) / (2 * o.delta**2)
                     + du @ (ops.boundary @ du) / (2 * o.delta) - (F + self.G) @ u)

    def step(self, u1, u2, p1, F):
        """One incremental minimization.

        Parameters
        ----------
        u1, u2 : ndarray
            Displacements at the two previous times.
        p1 : ndarray
            Plastic strain at the previous time.
        F : ndarray
            Assembled body force.
        """
        ops, scn, o = self.ops, self.scn, self.opts
        d, eps = o.delta, o.eps
        eu1 = ops.strain_of(u1)
        base = ((eps / d) * (ops.viscosity @ u1) + ops.mass @ (2 * u1 - u2) / d**2
                + ops.boundary @ u1 / d + F + self.G)
        q = p1.copy()
        history = []
        f_old = np.inf
        for sweep in range(1, o.max_sweeps + 1):
            u = self._solve(base + ops.stress_divergence(scn.hooke.apply(q)))
            eu = ops.strain_of(u)
            q_new, sigma = plastic_prox(scn.K, scn.hooke, eu, p1, eps, d,
                                        o.prox_tol, o.prox_max_iter)
            dq = float(np.abs(q_new - q).max())
            q = q_new
            f_new = self.functional(u, q, u1, u2, eu1, p1, F)
            history.append(f_new)
            q_scale = max(float(np.abs(eu).max()), float(np.abs(p1).max()), 1e-300)
            if dq == 0.0:
                break
            decrease = f_old - f_new
            if decrease <= o.tol_inner * (1 + abs(f_new)) and dq <= o.tol_inner * q_scale:
                break
            f_old = f_new
        else:
            raise SolverError(
                f"inner iteration did not converge in {o.max_sweeps} sweeps "
                f"(last q change {dq:.3e})")
        el = (self.system @ u - base - ops.stress_divergence(scn.hooke.apply(q)))
        stats = {
            "sweeps": sweep,
            "functional": history,
            "q_change": dq,
            "el_residual": float(np.abs(el).max()),
        }
        return u, q, sigma, stats


def perzyna_residual(K: StressConstraint, sigma, dp, eps, delta) -> np.ndarray:
    """Cellwise ``|dp - (delta/eps)(sigma - P_K sigma)|``."""
    return frob(dp - (delta / eps) * (sigma - K.project(sigma)))


def solve(scn: Scenario, opts: SolverOptions, check: bool = True) -> Trajectory:
    """Run the incremental scheme from ``t = 0`` to ``T``.

    Raises
    ------
    ConfigError
        If the initial data fail :func:`check_compatibility` (with ``check``).
    SolverError
        If an inner iteration fails to converge.
    """
    if check:
        check_compatibility(scn)
    mesh = scn.mesh
    n = opts.n_steps
    d = opts.delta
    stepper = Stepper(scn, opts)
    ops = stepper.ops
    nd = mesh.dim
    times = d * np.arange(n + 1)
    U = np.zeros((n + 1, mesh.ndof))
    V = np.zeros_like(U)
    E = np.zeros((n + 1, mesh.nc, nd, nd))
    P = np.zeros_like(E)
    U[0] = np.asarray(scn.u0, dtype=float).reshape(-1)
    V[0] = np.asarray(scn.v0, dtype=float).reshape(-1)
    E[0] = scn.e0
    P[0] = scn.p0
    stats = [{"sweeps": 0, "functional": [], "q_change": 0.0, "el_residual": 0.0,
              "perzyna_residual": 0.0}]
    for i in range(1, n + 1):
        F = ops.load_vector(scn.body_force(times[i - 1]))
        if i == 1 and opts.first_step == "elastic":
            U[1] = U[0] + d * V[0]
            P[1] = P[0]
            E[1] = E[0] + d * ops.strain_of(V[0])
            st = {"sweeps": 0, "functional": [], "q_change": 0.0, "el_residual": float("nan")}
        else:
            u2 = U[i - 2] if i >= 2 else U[0] - d * V[0]
            u, q, _, st = stepper.step(U[i - 1], u2, P[i - 1], F)
            U[i] = u
            P[i] = q
            E[i] = ops.strain_of(u) - q
        V[i] = (U[i] - U[i - 1]) / d
        sig = scn.hooke.apply(E[i])
        st["perzyna_residual"] = float(np.max(perzyna_residual(
            scn.K, sig, P[i] - P[i - 1], opts.eps, d)))
        stats.append(st)
        log.debug("step %d: %d sweeps", i, st["sweeps"])
    traj = Trajectory(scn, opts, ops, times, U, V, E, P, scn.hooke.apply(E),
                      stepper.g_eps, stats)
    traj.ledger = energy_ledger(traj)
    return traj


def energy_ledger(traj: Trajectory) -> EnergyLedger:
    """Recompute every energy term from the stored fields."""
    scn, o, ops = traj.scenario, traj.options, traj.ops
    vol = traj.mesh.volumes
    d, eps = o.delta, o.eps
    n = traj.n_steps
    kin = 0.5 * np.einsum("ij,ij->i", traj.v, (ops.mass @ traj.v.T).T)
    ela = scn.hooke.quadratic_form(traj.e) @ vol
    zero = np.zeros(n + 1)
    pla, bnd, vse, vpl, wf, wg = (zero.copy() for _ in range(6))
    G = traj.boundary_load()
    for i in range(1, n + 1):
        v = traj.v[i]
        dp = traj.p[i] - traj.p[i - 1]
        pla[i] = scn.K.support(dp) @ vol
        bnd[i] = d * v @ (ops.boundary @ v)
        vse[i] = d * eps * v @ (ops.viscosity @ v)
        vpl[i] = (eps / d) * ddot(dp, dp) @ vol
        wf[i] = d * traj.load(i) @ v
        wg[i] = d * G @ v
    return EnergyLedger(kin, ela, pla, bnd, vse, vpl, wf, wg)
