"""Symmetric hyperbolic (Friedrichs) form of 3D elastodynamics and the
synthesis of admissible boundary matrices.

The state is ``U = A0^(1/2) (v, sigma_pr)`` with ``sigma_pr`` the packed
stress ``(s11, s22, s33, s12, s13, s23)``. A boundary matrix ``M`` is
admissible for a normal ``nu`` when ``M >= 0``, ``rank(A_nu +- M) = 3`` and
``Ker A_nu`` is contained in ``Ker M``. For such ``M``,
``(A_nu +- M) U = 0`` is equivalent to ``(S1 +- S2) v -+ sigma nu = 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from dynplast.tensor_core import (
    B_MATRICES, Hooke, a0_half, c_tilde_power, pack, pack_state, sym_prod, unpack,
)

RANK_RTOL = 1e-10
BLOCK_RCOND = 1e-2  # min sigma_min / sigma_max of the pivot block


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > rtol * max(s[0], 1e-300)))


def null_space(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel."""
    _, s, vt = np.linalg.svd(a)
    r = int(np.sum(s > rtol * max(s[0], 1e-300)))
    return vt[r:].T


@dataclass(frozen=True)
class FriedrichsSystem:
    """Coefficient matrices of the 9x9 symmetric system for given Lame constants.

    Attributes
    ----------
    A : ndarray, shape (3, 9, 9)
        ``A_i = A0^(-1/2) Atilde_i A0^(-1/2)``, symmetric.
    a0_half, a0_mhalf : ndarray, shape (9, 9)
        ``A0^(1/2)`` and ``A0^(-1/2)``.
    """

    hooke: Hooke
    A: np.ndarray = field(repr=False)
    a0_half: np.ndarray = field(repr=False)
    a0_mhalf: np.ndarray = field(repr=False)

    def A_nu(self, nu) -> np.ndarray:
        return np.tensordot(np.asarray(nu, dtype=float), self.A, axes=1)

    def to_U(self, v, sigma) -> np.ndarray:
        return self.a0_half @ pack_state(v, sigma)

    def from_U(self, U) -> tuple[np.ndarray, np.ndarray]:
        w = self.a0_mhalf @ np.asarray(U, dtype=float)
        return w[:3], unpack(w[3:], 3)


def build_system(lam: float, mu: float) -> FriedrichsSystem:
    """Assemble the 3D Friedrichs system.

    Raises
    ------
    ValueError
        If ``mu <= 0`` or ``3 lam + 2 mu <= 0``.
    """
    hooke = Hooke(lam, mu, 3)
    half = a0_half(hooke, 0.5)
    mhalf = a0_half(hooke, -0.5)
    A = np.zeros((3, 9, 9))
    for i in range(3):
        at = np.zeros((9, 9))
        at[:3, 3:] = B_MATRICES[i]
        at[3:, :3] = B_MATRICES[i].T
        A[i] = mhalf @ at @ mhalf
    return FriedrichsSystem(hooke, A, half, mhalf)


def build_A_nu(system: FriedrichsSystem, nu) -> np.ndarray:
    return system.A_nu(nu)


def kernel_generators(system: FriedrichsSystem, nu) -> np.ndarray:
    """Explicit basis of ``Ker A_nu`` (columns), shape (9, 3).

    In permuted coordinates the generators are
    ``(0, Ahat'^-1 Ahat''_j, -e_j)``, ``j = 1..3``, mapped back through the
    permutation of :func:`permutation_C_nu`.
    """
    perm, ap, app = _select_block(system.A_nu(nu))
    x = np.linalg.solve(ap, app)
    kh = np.zeros((9, 3))
    kh[3:6] = x
    kh[6:] = -np.eye(3)
    C = _perm_matrix(perm)
    return C.T @ kh


def _perm_matrix(perm) -> np.ndarray:
    C = np.zeros((9, 9))
    C[:3, :3] = np.eye(3)
    for row, col in enumerate(perm):
        C[3 + row, 3 + col] = 1.0
    return C


def _select_block(a_nu: np.ndarray):
    # lexicographically smallest permutation of the last six coordinates
    # whose leading 3x3 block of the coupling is well conditioned; a block
    # that is merely invertible (nu nearly on a coordinate plane) makes M3
    # nearly singular and ruins the synthesized matrix in floating point
    coupling = a_nu[:3, 3:]
    ratios = {}
    for cols in itertools.combinations(range(6), 3):
        s = np.linalg.svd(coupling[:, cols], compute_uv=False)
        ratios[cols] = s[-1] / max(s[0], 1e-300)
        if ratios[cols] >= BLOCK_RCOND:
            break
    best = max(ratios, key=ratios.get) if ratios[cols] < BLOCK_RCOND else cols
    if ratios[best] <= RANK_RTOL:
        raise ValueError("A_nu has no invertible 3x3 coupling block; is nu zero?")
    rest = tuple(c for c in range(6) if c not in best)
    return best + rest, coupling[:, best], coupling[:, rest]


def permutation_C_nu(system: FriedrichsSystem, nu):
    """Permutation of the last six coordinates making the leading block invertible.

    Returns
    -------
    C : ndarray, shape (9, 9)
        Permutation matrix; the identity unless some component of ``nu``
        is zero or small enough to make the natural block ill conditioned.
    ap, app : ndarray
        ``Ahat'_nu`` (3x3, invertible) and ``Ahat''_nu`` (3x3) of
        ``C A_nu C^T``.
    """
    perm, ap, app = _select_block(system.A_nu(nu))
    return _perm_matrix(perm), ap, app


@dataclass(frozen=True)
class BoundaryMatrix:
    """Synthesized boundary matrix together with its inputs."""

    M: np.ndarray
    nu: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    C: np.ndarray
    blocks: dict = field(repr=False)


def build_M(system: FriedrichsSystem, nu, S1, S2=None) -> BoundaryMatrix:
    """Admissible boundary matrix realizing ``(S1 +- S2) v -+ sigma nu = 0``.

    Parameters
    ----------
    nu : array_like, shape (3,)
        Unit normal.
    S1 : array_like, shape (3, 3)
        Symmetric positive definite.
    S2 : array_like, shape (3, 3), optional
        Skew-symmetric, zero by default.
    """
    nu = np.asarray(nu, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    S2 = np.zeros((3, 3)) if S2 is None else np.asarray(S2, dtype=float)
    if not np.allclose(S1, S1.T, atol=1e-12):
        raise ValueError("S1 must be symmetric")
    if np.linalg.eigvalsh(S1).min() <= 0:
        raise ValueError("S1 must be positive definite")
    if not np.allclose(S2, -S2.T, atol=1e-12):
        raise ValueError("S2 must be skew-symmetric")
    C, ap, app = permutation_C_nu(system, nu)
    ap_inv = np.linalg.inv(ap)
    m3 = ap.T @ np.linalg.solve(S1, ap)
    m3 = 0.5 * (m3 + m3.T)
    m2 = -S2 @ ap_inv.T @ m3
    m3_inv = np.linalg.inv(m3)
    m1 = ap @ m3_inv @ ap.T + m2 @ m3_inv @ m2.T
    m1 = 0.5 * (m1 + m1.T)
    x = ap_inv @ app
    mh = np.zeros((9, 9))
    mh[:3, :3] = m1
    mh[:3, 3:6] = m2
    mh[:3, 6:] = m2 @ x
    mh[3:6, 3:6] = m3
    mh[3:6, 6:] = m3 @ x
    mh[6:, 6:] = x.T @ m3 @ x
    mh = np.triu(mh) + np.triu(mh, 1).T
    M = C.T @ mh @ C
    blocks = {"M1": m1, "M2": m2, "M3": m3, "ap": ap, "app": app}
    return BoundaryMatrix(M, nu, S1, S2, C, blocks)


@dataclass(frozen=True)
class Certificate:
    """Admissibility diagnostics of a boundary matrix."""

    min_eig: float
    kernel_residual: float
    rank_plus: int
    rank_minus: int
    m1_min_eig: float
    m3_min_eig: float
    skew_residuals: tuple
    tol: float = 1e-10

    @property
    def admissible(self) -> bool:
        return (self.min_eig >= -self.tol
                and self.kernel_residual <= self.tol
                and self.rank_plus == 3 and self.rank_minus == 3
                and self.m1_min_eig > self.tol and self.m3_min_eig > self.tol
                and max(self.skew_residuals) <= self.tol)

    def as_dict(self) -> dict:
        return {
            "min_eig": float(self.min_eig),
            "kernel_residual": float(self.kernel_residual),
            "rank_plus": int(self.rank_plus),
            "rank_minus": int(self.rank_minus),
            "m1_min_eig": float(self.m1_min_eig),
            "m3_min_eig": float(self.m3_min_eig),
            "skew_residuals": [float(x) for x in self.skew_residuals],
            "admissible": bool(self.admissible),
        }


def verify_admissible(system: FriedrichsSystem, nu, M, tol: float = 1e-10) -> Certificate:
    """Check ``M`` against ``A_nu``; residuals are relative to ``|A_nu|``.

    ``M`` may be a raw 9x9 matrix or a :class:`BoundaryMatrix`.
    """
    M = np.asarray(M.M if isinstance(M, BoundaryMatrix) else M, dtype=float)
    a_nu = system.A_nu(nu)
    scale = max(np.linalg.norm(a_nu, 2), np.linalg.norm(M, 2), 1e-300)
    min_eig = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()) / scale
    ker = kernel_generators(system, nu)
    ker = ker / np.linalg.norm(ker, axis=0)
    kernel_residual = float(np.abs(M @ ker).max()) / scale
    C, ap, _ = permutation_C_nu(system, nu)
    mh = C @ M @ C.T
    m1, m2, m3 = mh[:3, :3], mh[:3, 3:6], mh[3:6, 3:6]
    try:
        t1 = ap.T @ np.linalg.solve(m1, m2)
        t2 = ap @ np.linalg.solve(m3, m2.T)
        skew = (float(np.abs(t1 + t1.T).max()) / scale, float(np.abs(t2 + t2.T).max()) / scale)
    except np.linalg.LinAlgError:
        skew = (np.inf, np.inf)
    return Certificate(
        min_eig=min_eig,
        kernel_residual=kernel_residual,
        rank_plus=numerical_rank(a_nu + M),
        rank_minus=numerical_rank(a_nu - M),
        m1_min_eig=float(np.linalg.eigvalsh(0.5 * (m1 + m1.T)).min()) / scale,
        m3_min_eig=float(np.linalg.eigvalsh(0.5 * (m3 + m3.T)).min()) / scale,
        skew_residuals=skew,
        tol=tol,
    )


def boundary_equivalence(system: FriedrichsSystem, bm: BoundaryMatrix, v, sigma, sign: int):
    """Residuals of both sides of the boundary-condition equivalence.

    Returns
    -------
    (float, float)
        ``|(A_nu + sign M) U|`` and ``|(S1 + sign S2) v - sign sigma nu|``
        with ``U = A0^(1/2) (v, sigma_pr)``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    U = system.to_U(v, sigma)
    lhs = (system.A_nu(bm.nu) + sign * bm.M) @ U
    rhs = (bm.S1 + sign * bm.S2) @ np.asarray(v) - sign * np.asarray(sigma) @ bm.nu
    return float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs))


def phi_map(hooke: Hooke, nu, eta) -> np.ndarray:
    """``(mu I + (mu + lam) nu nu^T)^-1 eta``, so that ``A(Phi (.) nu) nu = eta``."""
    nu = np.asarray(nu, dtype=float)
    mat = hooke.mu * np.eye(len(nu)) + (hooke.mu + hooke.lam) * np.outer(nu, nu)
    return np.linalg.solve(mat, np.asarray(eta, dtype=float))


@dataclass(frozen=True)
class XiSplit:
    """Decomposition ``xi = xi0 + xi_plus + xi_minus`` of a boundary datum.

    ``xi0`` lies in ``Ker A_nu``, ``xi_plus`` in ``Ker(A_nu + M)`` and
    ``xi_minus`` in ``Ker(A_nu - M)``, the latter two inside ``Im A_nu``.
    ``quad_plus``/``quad_minus`` are ``M xi.xi`` and ``energy_plus``/
    ``energy_minus`` their closed forms
    ``S^-1 (tau nu +- S z).(tau nu +- S z) / 2``.
    """

    xi: np.ndarray
    xi0: np.ndarray
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    quad_plus: float
    quad_minus: float
    flux_plus: float
    flux_minus: float
    energy_plus: float
    energy_minus: float
    residuals: dict


def xi_split(system: FriedrichsSystem, bm: BoundaryMatrix, z, tau) -> XiSplit:
    """Split ``xi = A0^(1/2)(z, tau_pr)`` along the boundary subspaces.

    Requires a symmetric boundary law (``S2 = 0``).
    """
    if np.abs(bm.S2).max() > 0:
        raise ValueError("xi_split requires S2 = 0")
    hooke = system.hooke
    nu, S = bm.nu, bm.S1
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    tn = tau @ nu
    xi = system.to_U(z, tau)
    xi0 = system.to_U(np.zeros(3), tau - hooke.apply(sym_prod(phi_map(hooke, nu, tn), nu)))

    def part(sign):
        w = tn + sign * S @ z
        vel = 0.5 * (z + sign * np.linalg.solve(S, tn))
        stress = 0.5 * hooke.apply(sym_prod(phi_map(hooke, nu, w), nu))
        return system.to_U(vel, stress), w

    xp, wp = part(1)
    xm, wm = part(-1)
    a_nu = system.A_nu(nu)
    M = bm.M
    residuals = {
        "decomposition": float(np.linalg.norm(xi0 + xp + xm - xi)),
        "xi0_kernel": float(np.linalg.norm(a_nu @ xi0)),
        "plus_kernel": float(np.linalg.norm((a_nu + M) @ xp)),
        "minus_kernel": float(np.linalg.norm((a_nu - M) @ xm)),
        "phi": float(np.linalg.norm(
            hooke.apply(sym_prod(phi_map(hooke, nu, tn), nu)) @ nu - tn)),
    }
    return XiSplit(
        xi=xi, xi0=xi0, xi_plus=xp, xi_minus=xm,
        quad_plus=float(M @ xp @ xp), quad_minus=float(M @ xm @ xm),
        flux_plus=float(-a_nu @ xp @ xp), flux_minus=float(-a_nu @ xm @ xm),
        energy_plus=float(0.5 * wp @ np.linalg.solve(S, wp)),
        energy_minus=float(0.5 * wm @ np.linalg.solve(S, wm)),
        residuals=residuals,
    )


def energy_norm_identity(system: FriedrichsSystem, v, sigma, z, tau) -> float:
    """Residual of ``|U - xi|^2 = |v - z|^2 + A^-1(sigma - tau):(sigma - tau)``."""
    d = system.to_U(v, sigma) - system.to_U(z, tau)
    ds = np.asarray(sigma) - np.asarray(tau)
    dv = np.asarray(v) - np.asarray(z)
    rhs = dv @ dv + np.sum(system.hooke.inverse_apply(ds) * ds)
    return float(abs(d @ d - rhs))


def flux_identity(system: FriedrichsSystem, X, w, s) -> float:
    """Residual of ``sum_i X_i A_i theta.theta = -2 (s X).w`` for ``theta = A0^(1/2)(w, s_pr)``."""
    theta = system.to_U(w, s)
    X = np.asarray(X, dtype=float)
    lhs = float(theta @ system.A_nu(X) @ theta)
    return abs(lhs + 2 * float((np.asarray(s) @ X) @ np.asarray(w)))


def friedrichs_report(system: FriedrichsSystem, nu, S1, S2=None, z=None, tau=None) -> dict:
    """Matrix, certificate and optional xi split as a JSON-friendly dict."""
    bm = build_M(system, nu, S1, S2)
    cert = verify_admissible(system, nu, bm)
    out = {
        "nu": list(map(float, bm.nu)),
        "M": bm.M.tolist(),
        "permutation_identity": bool(np.allclose(bm.C, np.eye(9))),
        "certificate": cert.as_dict(),
    }
    if z is not None and tau is not None and not np.abs(bm.S2).max() > 0:
        xs = xi_split(system, bm, z, tau)
        out["xi"] = {
            "xi0": xs.xi0.tolist(),
            "xi_plus": xs.xi_plus.tolist(),
            "xi_minus": xs.xi_minus.tolist(),
            "M_xi_plus": xs.quad_plus,
            "M_xi_minus": xs.quad_minus,
            "closed_form_plus": xs.energy_plus,
            "closed_form_minus": xs.energy_minus,
            "residuals": xs.residuals,
        }
    return out


def pack_sigma(sigma) -> np.ndarray:
    return pack(sigma)


def c_tilde(hooke: Hooke, gamma: float = 1.0) -> np.ndarray:
    return c_tilde_power(hooke, gamma)
