"""Symmetric tensor algebra, isotropic elasticity and the packed stress layout.

Symmetric tensors are handled as ``(..., n, n)`` arrays so that all cellwise
operations vectorize; :class:`SymTensor` is the packed value type used at
interfaces that want the independent components only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# packed index pairs, dim -> list of (i, j)
VOIGT_PAIRS = {
    2: [(0, 0), (1, 1), (0, 1)],
    3: [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)],
}


def n_components(dim: int) -> int:
    return dim * (dim + 1) // 2


def pack(sigma: np.ndarray) -> np.ndarray:
    """Independent components of symmetric tensor(s), no shear scaling.

    Order is ``(11, 22, 12)`` in 2D and ``(11, 22, 33, 12, 13, 23)`` in 3D.
    """
    sigma = np.asarray(sigma, dtype=float)
    dim = sigma.shape[-1]
    return np.stack([sigma[..., i, j] for i, j in VOIGT_PAIRS[dim]], axis=-1)


def unpack(components: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`pack`."""
    components = np.asarray(components, dtype=float)
    m = components.shape[-1]
    if dim is None:
        dim = {3: 2, 6: 3}[m]
    out = np.zeros(components.shape[:-1] + (dim, dim))
    for k, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        out[..., i, j] = components[..., k]
        out[..., j, i] = components[..., k]
    return out


@dataclass(frozen=True)
class SymTensor:
    """Symmetric ``dim x dim`` tensor stored by its independent components."""

    components: tuple
    dim: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if len(self.components) != n_components(self.dim):
            raise ValueError(
                f"expected {n_components(self.dim)} components, got {len(self.components)}")

    @classmethod
    def from_matrix(cls, a, atol: float = 1e-12) -> "SymTensor":
        a = np.asarray(a, dtype=float)
        if not np.allclose(a, a.T, atol=atol * max(1.0, np.abs(a).max())):
            raise ValueError("matrix is not symmetric")
        return cls(tuple(float(c) for c in pack(0.5 * (a + a.T))), a.shape[0])

    @property
    def matrix(self) -> np.ndarray:
        return unpack(np.array(self.components), self.dim)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def trace(self) -> float:
        return float(np.trace(self.matrix))


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part of (a batch of) square matrices."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sym_prod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetrized tensor product ``(a b^T + b a^T) / 2`` of vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    outer = a[..., :, None] * b[..., None, :]
    return sym(outer)


def ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius product over the last two axes."""
    return np.einsum("...ij,...ij->...", a, b)


def frob(a: np.ndarray) -> np.ndarray:
    return np.sqrt(ddot(a, a))


def trace(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


def dev(a: np.ndarray) -> np.ndarray:
    """Deviatoric part."""
    n = a.shape[-1]
    return a - (trace(a) / n)[..., None, None] * np.eye(n)


def sph(a: np.ndarray) -> np.ndarray:
    """Spherical part, ``tr(a) I / n``."""
    n = a.shape[-1]
    return (trace(a) / n)[..., None, None] * np.eye(n)


@dataclass(frozen=True)
class Hooke:
    """Isotropic elasticity ``A e = lam tr(e) I + 2 mu e``.

    Parameters
    ----------
    lam, mu : float
        Lame coefficients. Ellipticity requires ``mu > 0`` and
        ``dim * lam + 2 * mu > 0``.
    dim : int
        Space dimension, 2 or 3.
    """

    lam: float
    mu: float
    dim: int = 3

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if not self.mu > 0:
            raise ValueError(f"ellipticity violated: mu = {self.mu} must be > 0")
        if not self.dim * self.lam + 2 * self.mu > 0:
            raise ValueError(
                f"ellipticity violated: {self.dim}*lam + 2*mu = "
                f"{self.dim * self.lam + 2 * self.mu} must be > 0")

    @property
    def bulk(self) -> float:
        """Eigenvalue of ``A`` on spherical tensors."""
        return 2 * self.mu + self.dim * self.lam

    def apply(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        return self.lam * trace(e)[..., None, None] * np.eye(e.shape[-1]) + 2 * self.mu * e

    def inverse_apply(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return dev(s) / (2 * self.mu) + sph(s) / self.bulk

    def quadratic_form(self, e: np.ndarray) -> np.ndarray:
        """``Q(e) = A e : e / 2``."""
        return 0.5 * ddot(self.apply(e), e)

    def matrix(self) -> np.ndarray:
        """``A`` acting on row-major flattened ``dim x dim`` tensors."""
        n = self.dim
        eye = np.eye(n)
        a = (self.lam * np.einsum("ij,kl->ijkl", eye, eye)
             + self.mu * (np.einsum("ik,jl->ijkl", eye, eye)
                          + np.einsum("il,jk->ijkl", eye, eye)))
        return a.reshape(n * n, n * n)


def c_tilde_power(hooke: Hooke, gamma: float) -> np.ndarray:
    """Power of the 3x3 normal-stress block of ``A``.

    The block has diagonal ``lam + 2 mu`` and off-diagonal ``lam``, with
    eigenvalue ``2 mu`` (multiplicity 2) and ``2 mu + 3 lam``.
    """
    if hooke.dim != 3:
        raise ValueError("c_tilde_power is defined in 3D")
    a2 = (2 * hooke.mu) ** gamma
    a3 = (2 * hooke.mu + 3 * hooke.lam) ** gamma
    alpha = 2.0 / 3.0 * a2 + a3 / 3.0
    beta = -a2 / 3.0 + a3 / 3.0
    return np.full((3, 3), beta) + (alpha - beta) * np.eye(3)


# B_i such that sum_i x_i B_i sigma_pr = -sigma x
B_MATRICES = -np.array([
    [[1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]],
    [[0, 0, 0, 1, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1]],
    [[0, 0, 0, 0, 1, 0], [0, 0, 0, 0, 0, 1], [0, 0, 1, 0, 0, 0]],
], dtype=float)


def b_prime(nu: np.ndarray) -> np.ndarray:
    """Normal-stress block of ``sum_i nu_i B_i``."""
    return -np.diag(np.asarray(nu, dtype=float))


def b_second(nu: np.ndarray) -> np.ndarray:
    """Shear block of ``sum_i nu_i B_i``."""
    n1, n2, n3 = np.asarray(nu, dtype=float)
    return -np.array([[n2, n3, 0.0], [n1, 0.0, n3], [0.0, n1, n2]])


def packed_normal_residual(sigma: np.ndarray, nu: np.ndarray) -> float:
    """Residual of ``B'_nu s' + B''_nu s'' = -sigma nu`` for a 3D tensor."""
    s = pack(sigma)
    lhs = b_prime(nu) @ s[:3] + b_second(nu) @ s[3:]
    return float(np.linalg.norm(lhs + np.asarray(sigma) @ np.asarray(nu)))


def a0_half(hooke: Hooke, power: float = 0.5) -> np.ndarray:
    """``diag(I, C^-p, mu^-p I)``, the ``p``-th power of the 9x9 weight.

    ``power=0.5`` maps ``(v, sigma_pr)`` to the symmetric variable ``U``.
    """
    out = np.zeros((9, 9))
    out[:3, :3] = np.eye(3)
    out[3:6, 3:6] = c_tilde_power(hooke, -power)
    out[6:, 6:] = hooke.mu ** (-power) * np.eye(3)
    return out


def pack_state(v: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Concatenate velocity and packed stress into the 9-vector ``(v, sigma_pr)``."""
    return np.concatenate([np.asarray(v, dtype=float), pack(sigma)])


def unpack_state(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=float)
    return w[:3], unpack(w[3:], 3)
