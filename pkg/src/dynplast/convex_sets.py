"""Stress constraint sets, support functions, boundary laws and the
boundary inf-convolution.

Support functions return ``numpy.inf`` outside their effective domain. That
value is the extended-real ``+inf`` and never stands in for anything else.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from dynplast.tensor_core import dev, frob, sph, sym_prod, trace

# relative trace tolerance deciding membership in the deviatoric subspace
TRACE_RTOL = 1e-10


def secular_root(h: np.ndarray, c: np.ndarray, rho, max_iter: int = 100) -> np.ndarray:
    """Solve ``sum_k c_k^2 / (h_k + t)^2 = rho^2`` for ``t >= 0``.

    Vectorized over leading axes. Requires ``h > 0`` and the left-hand side
    at ``t = 0`` to exceed ``rho^2``. Newton iterations on
    ``1/|p(t)| - 1/rho``, which is concave increasing, so the iterates
    increase monotonically towards the root.

    Parameters
    ----------
    h, c : ndarray, shape (..., m)
    rho : float or ndarray, shape (...)

    Returns
    -------
    ndarray, shape (...)
    """
    h = np.asarray(h, dtype=float)
    c2 = np.asarray(c, dtype=float) ** 2
    rho = np.broadcast_to(np.asarray(rho, dtype=float), h.shape[:-1])
    t = np.zeros(h.shape[:-1])
    for _ in range(max_iter):
        d = h + t[..., None]
        pn2 = np.sum(c2 / d**2, axis=-1)
        pn = np.sqrt(pn2)
        phi = 1.0 / pn - 1.0 / rho
        dphi = np.sum(c2 / d**3, axis=-1) / (pn2 * pn)
        step = -phi / dphi
        t = np.maximum(t + step, t)
        if np.all(np.abs(step) <= 1e-15 * np.maximum(t, 1e-300)) or np.all(np.abs(phi) * rho <= 4e-16):
            break
    return t


def _sqrtm_spd(s: np.ndarray, power: float = 0.5) -> np.ndarray:
    w, v = np.linalg.eigh(s)
    return (v * w**power) @ v.T


class StressConstraint:
    """Closed convex set ``K`` of admissible stresses containing a ball around 0."""

    dim: int

    def project(self, sigma: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, q: np.ndarray) -> np.ndarray:
        """``H(q) = sup over sigma in K of sigma : q``."""
        raise NotImplementedError

    def contains(self, sigma: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        raise NotImplementedError

    def distance(self, sigma: np.ndarray) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        return frob(sigma - self.project(sigma))

    @property
    def r_inner(self) -> float:
        """Radius of a Frobenius ball around 0 contained in ``K``."""
        raise NotImplementedError

    def section_gauge(self, nu: np.ndarray):
        """Quadratic description ``(G, rho)`` of ``{tau nu : tau in K}``.

        Returns ``None`` when the traction set is not an ellipsoid or cylinder.
        """
        return None

    def sample(self, rng: np.random.Generator, size: int, scale: float = 1.0) -> np.ndarray:
        """Random points of ``K`` (by projection of Gaussian tensors)."""
        g = rng.normal(size=(size, self.dim, self.dim)) * scale
        return self.project(0.5 * (g + np.swapaxes(g, -1, -2)))


@dataclass(frozen=True)
class Ball(StressConstraint):
    """Frobenius ball ``|sigma| <= radius``."""

    radius: float
    dim: int = 3

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def project(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        n = frob(sigma)
        scale = np.where(n > self.radius, self.radius / np.maximum(n, 1e-300), 1.0)
        return sigma * scale[..., None, None]

    def support(self, q):
        return self.radius * frob(np.asarray(q, dtype=float))

    def contains(self, sigma, tol=1e-12):
        return frob(np.asarray(sigma, dtype=float)) <= self.radius * (1 + tol)

    @property
    def r_inner(self):
        return self.radius

    def section_gauge(self, nu):
        nu = np.asarray(nu, dtype=float)
        nn = np.outer(nu, nu)
        return nn + 2 * (np.eye(len(nu)) - nn), self.radius


@dataclass(frozen=True)
class VonMisesCylinder(StressConstraint):
    """``|dev sigma| <= k`` with unconstrained pressure."""

    k: float
    dim: int = 3

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")

    def project(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        s = dev(sigma)
        n = frob(s)
        scale = np.where(n > self.k, self.k / np.maximum(n, 1e-300), 1.0)
        return sph(sigma) + s * scale[..., None, None]

    def support(self, q):
        q = np.asarray(q, dtype=float)
        finite = np.abs(trace(q)) <= TRACE_RTOL * np.maximum(1.0, frob(q))
        return np.where(finite, self.k * frob(dev(q)), np.inf)

    def contains(self, sigma, tol=1e-12):
        return frob(dev(np.asarray(sigma, dtype=float))) <= self.k * (1 + tol)

    @property
    def r_inner(self):
        return self.k

    def section_gauge(self, nu):
        nu = np.asarray(nu, dtype=float)
        return 2 * (np.eye(len(nu)) - np.outer(nu, nu)), self.k


def _frob_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of symmetric ``dim x dim`` tensors, shape (m, dim, dim)."""
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            basis.append(e)
    return np.array(basis)


@dataclass(frozen=True, eq=False)
class Polyhedral(StressConstraint):
    """Intersection of half-spaces ``N_i : sigma <= b_i`` with ``b_i > 0``.

    Projection uses Dykstra's alternating projections; the support function
    is a linear program.

    Parameters
    ----------
    normals : array_like, shape (m, dim, dim)
        Symmetric normal tensors.
    offsets : array_like, shape (m,)
    """

    normals: np.ndarray
    offsets: np.ndarray
    max_iter: int = 20000
    tol: float = 1e-13
    dim: int = field(init=False)

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        if normals.ndim != 3 or normals.shape[1] != normals.shape[2]:
            raise ValueError("normals must have shape (m, dim, dim)")
        if not np.allclose(normals, np.swapaxes(normals, 1, 2)):
            raise ValueError("normals must be symmetric")
        if np.any(offsets <= 0):
            raise ValueError("offsets must be positive so that 0 is interior")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "dim", normals.shape[1])

    @property
    def _basis(self):
        return _frob_basis(self.dim)

    def _rows(self):
        # half-space normals in orthonormal coordinates
        return np.einsum("mij,kij->mk", self.normals, self._basis)

    def _to_vec(self, sigma):
        return np.einsum("...ij,kij->...k", sigma, self._basis)

    def _from_vec(self, x):
        return np.einsum("...k,kij->...ij", x, self._basis)

    @property
    def r_inner(self):
        rows = self._rows()
        return float(np.min(self.offsets / np.linalg.norm(rows, axis=1)))

    def contains(self, sigma, tol=1e-12):
        x = self._to_vec(np.asarray(sigma, dtype=float))
        return np.all(x @ self._rows().T <= self.offsets * (1 + tol), axis=-1)

    def _project_vec(self, y):
        rows = self._rows()
        nrm2 = np.sum(rows**2, axis=1)
        if np.all(rows @ y <= self.offsets):
            return y
        x = y.copy()
        incr = np.zeros((len(rows), len(y)))
        for _ in range(self.max_iter):
            x_old = x.copy()
            for i, (a, b) in enumerate(zip(rows, self.offsets)):
                z = x + incr[i]
                viol = a @ z - b
                x = z - max(viol, 0.0) / nrm2[i] * a
                incr[i] = z - x
            if np.linalg.norm(x - x_old) <= self.tol * max(1.0, np.linalg.norm(y)):
                break
        else:
            warnings.warn("Dykstra projection did not reach tolerance", RuntimeWarning)
        return x

    def project(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        x = self._to_vec(sigma)
        flat = x.reshape(-1, x.shape[-1])
        out = np.array([self._project_vec(y) for y in flat]).reshape(x.shape)
        return self._from_vec(out)

    def support(self, q):
        q = np.asarray(q, dtype=float)
        c = self._to_vec(q)
        flat = c.reshape(-1, c.shape[-1])
        rows = self._rows()
        vals = np.empty(len(flat))
        for n, ck in enumerate(flat):
            if not np.any(ck):
                vals[n] = 0.0
                continue
            res = linprog(-ck, A_ub=rows, b_ub=self.offsets,
                          bounds=[(None, None)] * len(ck), method="highs")
            if res.status == 3:
                vals[n] = np.inf
            elif res.status == 0:
                vals[n] = -res.fun
            else:
                raise RuntimeError(f"support LP failed: {res.message}")
        return vals.reshape(c.shape[:-1])


@dataclass
class BoundaryLaw:
    """Symmetric positive-definite boundary matrices ``S``, one per facet.

    Parameters
    ----------
    S : ndarray, shape (n, n) or (nf, n, n)
    """

    S: np.ndarray

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        if self.S.ndim == 2:
            self.S = self.S[None]
        if not np.allclose(self.S, np.swapaxes(self.S, 1, 2), atol=1e-12):
            raise ValueError("boundary matrix S must be symmetric")
        if self.coercivity <= 0:
            raise ValueError("boundary matrix S must be positive definite")

    @property
    def coercivity(self) -> float:
        return float(np.linalg.eigvalsh(self.S).min())

    def at(self, facet: int) -> np.ndarray:
        return self.S[0] if len(self.S) == 1 else self.S[facet]

    def per_facet(self, nf: int) -> np.ndarray:
        if len(self.S) == 1:
            return np.repeat(self.S, nf, axis=0)
        if len(self.S) != nf:
            raise ValueError(f"law has {len(self.S)} matrices for {nf} facets")
        return self.S


def h_nu(K: StressConstraint, nu, z) -> float:
    """``H(-z (.) nu)``, the support function of ``-K nu`` at ``z``."""
    return float(K.support(-sym_prod(np.asarray(z, dtype=float), np.asarray(nu, dtype=float))))


def _project_ellipsoid(S, G, rho, w):
    # S^-1-metric projection of w onto {q : q^T G q <= rho^2}
    s_half = _sqrtm_spd(S, 0.5)
    s_mhalf = _sqrtm_spd(S, -0.5)
    g_hat = s_half @ G @ s_half
    g, V = np.linalg.eigh(0.5 * (g_hat + g_hat.T))
    y_hat = V.T @ (s_mhalf @ w)
    if np.sum(g * y_hat**2) <= rho**2:
        return np.array(w, dtype=float)
    keep = g > 1e-12 * g.max()
    t = secular_root(1.0 / g[keep], y_hat[keep] / np.sqrt(g[keep]), rho)
    y = y_hat.copy()
    y[keep] = y_hat[keep] / (1 + t * g[keep])
    return s_half @ (V @ y)


def _project_generic(S, K, nu, w, max_iter=20000, tol=1e-14):
    # accelerated projected gradient on tau in K for min |w + tau nu|^2_{S^-1} / 2
    Sinv = np.linalg.inv(S)
    L = np.linalg.eigvalsh(Sinv).max()
    n = len(nu)
    tau = np.zeros((n, n))
    y = tau.copy()
    tk = 1.0
    for _ in range(max_iter):
        grad = sym_prod(Sinv @ (w + y @ nu), nu)
        tau_new = K.project(y - grad / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk**2))
        # restart on loss of monotonicity
        if np.sum((y - tau_new) * (tau_new - tau)) > 0:
            y = tau_new
            t_new = 1.0
        else:
            y = tau_new + (tk - 1) / t_new * (tau_new - tau)
        if np.linalg.norm(tau_new - tau) <= tol * max(1.0, np.linalg.norm(w)):
            tau = tau_new
            break
        tau, tk = tau_new, t_new
    return -tau @ nu


def project_neg_K_nu(S, K: StressConstraint, nu, w, method: str = "auto") -> np.ndarray:
    """Projection of ``w`` onto ``-K nu = {-tau nu : tau in K}`` in the ``S^-1`` metric.

    Parameters
    ----------
    S : ndarray, shape (n, n)
        Boundary matrix (symmetric positive definite).
    K : StressConstraint
    nu : ndarray, shape (n,)
        Unit normal.
    w : ndarray, shape (n,)
    method : {"auto", "closed", "iterative"}
        ``closed`` uses the quadratic description of the traction set
        (available for balls and cylinders); ``iterative`` runs accelerated
        projected gradient on the stress.
    """
    S = np.asarray(S, dtype=float)
    nu = np.asarray(nu, dtype=float)
    w = np.asarray(w, dtype=float)
    gauge = K.section_gauge(nu) if method in ("auto", "closed") else None
    if gauge is not None:
        # K symmetric about 0 for these sets, so -K nu = K nu
        return _project_ellipsoid(S, gauge[0], gauge[1], w)
    if method == "closed":
        raise ValueError(f"no closed-form traction set for {type(K).__name__}")
    return _project_generic(S, K, nu, w)


def psi_grad(S, K, nu, z, method: str = "auto") -> np.ndarray:
    """Gradient of :func:`psi`, ``P(S z)`` with ``P`` the projection onto ``-K nu``."""
    S = np.asarray(S, dtype=float)
    return project_neg_K_nu(S, K, nu, S @ np.asarray(z, dtype=float), method)


def psi(S, K, nu, z, method: str = "auto") -> float:
    """Boundary dissipation potential.

    ``psi(z) = inf over z' of S z'.z'/2 + H((z' - z) (.) nu)``, evaluated as
    ``S z.z/2 - |P(S z) - S z|^2_{S^-1}/2``.
    """
    S = np.asarray(S, dtype=float)
    z = np.asarray(z, dtype=float)
    w = S @ z
    r = project_neg_K_nu(S, K, nu, w, method) - w
    return float(0.5 * z @ w - 0.5 * r @ np.linalg.solve(S, r))


def infconv_minimizer(S, K, nu, z, method: str = "auto") -> np.ndarray:
    """Split point ``zbar`` of the inf-convolution.

    ``psi(z) = S(z - zbar).(z - zbar)/2 + H(-zbar (.) nu)`` and
    ``z - zbar = S^-1 grad psi(z)``.
    """
    S = np.asarray(S, dtype=float)
    z = np.asarray(z, dtype=float)
    zbar = z - np.linalg.solve(S, psi_grad(S, K, nu, z, method))
    if isinstance(K, VonMisesCylinder):
        # zbar is tangential in exact arithmetic; drop the roundoff normal part
        nu = np.asarray(nu, dtype=float)
        zbar = zbar - (zbar @ nu) * nu
    return zbar
