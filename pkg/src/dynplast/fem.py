"""P1 simplicial meshes and the finite element operators of the dynamic problem.

Displacements are stored node-major: dof ``a * dim + k`` is component ``k``
at vertex ``a``. Strains, stresses and plastic strains are cellwise constant
``(nc, dim, dim)`` arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from dynplast.tensor_core import Hooke


@dataclass
class Mesh:
    """Conforming simplicial mesh with its boundary facets.

    Attributes
    ----------
    vertices : ndarray, shape (nv, dim)
    cells : ndarray, shape (nc, dim + 1)
    facets : ndarray, shape (nf, dim)
        Boundary facets as vertex indices.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    facet_measure: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.facets = np.asarray(self.facets, dtype=np.int64).reshape(-1, self.dim)
        if self.dim not in (2, 3):
            raise ValueError("only 2D and 3D meshes are supported")
        if self.cells.shape[1] != self.dim + 1:
            raise ValueError("cells must be simplices")
        x = self.vertices[self.cells]
        J = np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)
        det = np.linalg.det(J)
        if np.any(np.abs(det) <= 1e-14 * np.abs(J).max() ** self.dim):
            raise ValueError("degenerate cell")
        self.volumes = np.abs(det) / math.factorial(self.dim)
        jinv = np.linalg.inv(J)
        g = np.empty((self.nc, self.dim + 1, self.dim))
        g[:, 1:] = jinv
        g[:, 0] = -jinv.sum(axis=1)
        self.grads = g
        self._facet_geometry()

    def _facet_geometry(self):
        lookup = {}
        for c, cell in enumerate(self.cells):
            for face in itertools.combinations(sorted(cell), self.dim):
                lookup.setdefault(face, c)
        fc = np.empty(self.nf, dtype=np.int64)
        for f, face in enumerate(self.facets):
            key = tuple(sorted(face))
            if key not in lookup:
                raise ValueError(f"facet {f} is not a face of any cell")
            fc[f] = lookup[key]
        self.facet_cells = fc
        p = self.vertices[self.facets]
        if self.dim == 2:
            t = p[:, 1] - p[:, 0]
            n = np.stack([t[:, 1], -t[:, 0]], axis=1)
            meas = np.linalg.norm(t, axis=1)
        else:
            n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            meas = 0.5 * np.linalg.norm(n, axis=1)
        n = n / np.linalg.norm(n, axis=1)[:, None]
        # orient away from the adjacent cell
        out = p.mean(axis=1) - self.cell_centroids[fc]
        n *= np.sign(np.sum(n * out, axis=1))[:, None]
        self.normals = n
        self.facet_measure = meas

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nc(self) -> int:
        return len(self.cells)

    @property
    def nf(self) -> int:
        return len(self.facets)

    @property
    def ndof(self) -> int:
        return self.nv * self.dim

    @property
    def cell_centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    def reordered(self, order) -> "Mesh":
        """Same mesh with cells permuted by ``order``."""
        return Mesh(self.vertices, self.cells[np.asarray(order)], self.facets)


def boundary_facets(cells: np.ndarray, dim: int) -> np.ndarray:
    """Faces that belong to exactly one cell."""
    count = {}
    for cell in cells:
        for face in itertools.combinations(sorted(cell), dim):
            count[face] = count.get(face, 0) + 1
    return np.array(sorted(f for f, k in count.items() if k == 1), dtype=np.int64)


def generate_box_mesh(dim: int, lengths, subdivisions) -> Mesh:
    """Structured simplicial mesh of ``[0, L1] x ... x [0, Ld]``.

    Each quadrilateral is split into 2 triangles, each hexahedron into 6
    tetrahedra sharing the main diagonal.
    """
    lengths = np.asarray(lengths, dtype=float)
    subdivisions = np.asarray(subdivisions, dtype=int)
    if len(lengths) != dim or len(subdivisions) != dim:
        raise ValueError("lengths and subdivisions must have one entry per dimension")
    if np.any(subdivisions < 1) or np.any(lengths <= 0):
        raise ValueError("lengths and subdivisions must be positive")
    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(lengths, subdivisions)]
    grid = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([g.ravel() for g in grid], axis=1)
    shape = tuple(subdivisions + 1)

    def vid(idx):
        return np.ravel_multi_index(idx, shape)

    cells = []
    for base in itertools.product(*[range(n) for n in subdivisions]):
        base = np.array(base)
        for perm in itertools.permutations(range(dim)):
            corner = base.copy()
            simplex = [vid(tuple(corner))]
            for axis in perm:
                corner = corner.copy()
                corner[axis] += 1
                simplex.append(vid(tuple(corner)))
            cells.append(simplex)
    cells = np.array(cells, dtype=np.int64)
    return Mesh(vertices, cells, boundary_facets(cells, dim))


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (0-based indices)."""
    lines = [f"{mesh.dim} {mesh.nv} {mesh.nc} {mesh.nf}"]
    lines += [" ".join(repr(float(c)) for c in x) for x in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    lines += [" ".join(str(int(i)) for i in f) for f in mesh.facets]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`.

    The header line is ``dim nv nc nf``, followed by ``nv`` coordinate
    lines, ``nc`` cell lines and ``nf`` boundary facet lines.
    """
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 4:
        raise ValueError(f"{path}: bad header, expected 'dim nv nc nf'")
    dim, nv, nc, nf = map(int, rows[0])
    if len(rows) != 1 + nv + nc + nf:
        raise ValueError(f"{path}: expected {1 + nv + nc + nf} lines, found {len(rows)}")
    verts = np.array(rows[1:1 + nv], dtype=float).reshape(nv, dim)
    cells = np.array(rows[1 + nv:1 + nv + nc], dtype=np.int64).reshape(nc, dim + 1)
    facets = np.array(rows[1 + nv + nc:], dtype=np.int64).reshape(nf, dim)
    for name, arr in (("cell", cells), ("facet", facets)):
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise ValueError(f"{path}: {name} vertex index out of range")
    return Mesh(verts, cells, facets)


@dataclass
class Operators:
    """Assembled sparse operators on one mesh.

    Attributes
    ----------
    strain : sparse, (nc*dim*dim, ndof)
        Maps displacements to flattened cellwise strains.
    mass, stiffness, viscosity, boundary : sparse, (ndof, ndof)
        Consistent mass, elastic stiffness ``int A Eu:Ew``, ``int Eu:Ew`` and
        boundary form ``int_dO S u.w``.
    facet_average : sparse, (nf*dim, ndof)
        Mean of the vertex values on each boundary facet.
    """

    mesh: Mesh
    hooke: Hooke
    strain: sp.csr_matrix
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    viscosity: sp.csr_matrix
    boundary: sp.csr_matrix
    facet_average: sp.csr_matrix
    facet_S: np.ndarray

    def strain_of(self, u: np.ndarray) -> np.ndarray:
        d = self.mesh.dim
        return (self.strain @ u).reshape(-1, d, d)

    def stress_divergence(self, stress: np.ndarray) -> np.ndarray:
        """``G^T (|c| stress)``, the discrete ``int stress : E w``."""
        w = stress * self.mesh.volumes[:, None, None]
        return self.strain.T @ w.reshape(-1)

    def facet_values(self, u: np.ndarray) -> np.ndarray:
        return (self.facet_average @ u).reshape(-1, self.mesh.dim)

    def load_vector(self, f_nodal: np.ndarray) -> np.ndarray:
        """``int f . w`` for the P1 interpolant of a nodal field."""
        return self.mass @ np.asarray(f_nodal, dtype=float).reshape(-1)

    def boundary_load(self, g_facets: np.ndarray) -> np.ndarray:
        """``int_dO g . w`` for a facetwise constant field ``g``."""
        mesh = self.mesh
        g = np.asarray(g_facets, dtype=float).reshape(mesh.nf, mesh.dim)
        out = np.zeros((mesh.nv, mesh.dim))
        share = (mesh.facet_measure / mesh.dim)[:, None] * g
        for k in range(mesh.dim):
            np.add.at(out, mesh.facets[:, k], share)
        return out.reshape(-1)


def strain_matrix(mesh: Mesh) -> sp.csr_matrix:
    d = mesh.dim
    rows, cols, vals = [], [], []
    for c in range(mesh.nc):
        for a, vert in enumerate(mesh.cells[c]):
            g = mesh.grads[c, a]
            for k in range(d):
                for i in range(d):
                    for j in range(d):
                        v = 0.5 * ((i == k) * g[j] + (j == k) * g[i])
                        if v != 0.0:
                            rows.append((c * d + i) * d + j)
                            cols.append(vert * d + k)
                            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.nc * d * d, mesh.ndof))


def strain(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Cellwise symmetric gradient of a P1 displacement."""
    u = np.asarray(u, dtype=float).reshape(mesh.nv, mesh.dim)
    grad = np.einsum("cak,cai->cki", u[mesh.cells], mesh.grads)
    return 0.5 * (grad + np.swapaxes(grad, 1, 2))


def mass_matrix(mesh: Mesh, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """Consistent P1 mass, optionally with a cellwise weight."""
    d = mesh.dim
    vol = mesh.volumes if weights is None else mesh.volumes * weights
    n = d + 1
    local = (np.ones((n, n)) + np.eye(n)) / ((d + 1) * (d + 2))
    rows, cols, vals = [], [], []
    for a in range(n):
        for b in range(n):
            for k in range(d):
                rows.append(mesh.cells[:, a] * d + k)
                cols.append(mesh.cells[:, b] * d + k)
                vals.append(vol * local[a, b])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.ndof, mesh.ndof))


def boundary_matrix(mesh: Mesh, S_facets: np.ndarray) -> sp.csr_matrix:
    d = mesh.dim
    local = (np.ones((d, d)) + np.eye(d)) / (d * (d + 1))
    rows, cols, vals = [], [], []
    for a in range(d):
        for b in range(d):
            w = mesh.facet_measure * local[a, b]
            for k in range(d):
                for m in range(d):
                    rows.append(mesh.facets[:, a] * d + k)
                    cols.append(mesh.facets[:, b] * d + m)
                    vals.append(w * S_facets[:, k, m])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.ndof, mesh.ndof))


def facet_average_matrix(mesh: Mesh) -> sp.csr_matrix:
    d = mesh.dim
    rows, cols = [], []
    for a in range(d):
        for k in range(d):
            rows.append(np.arange(mesh.nf) * d + k)
            cols.append(mesh.facets[:, a] * d + k)
    rows = np.concatenate(rows)
    return sp.csr_matrix((np.full(len(rows), 1.0 / d), (rows, np.concatenate(cols))),
                         shape=(mesh.nf * d, mesh.ndof))


def assemble_operators(mesh: Mesh, hooke: Hooke, S_facets: np.ndarray) -> Operators:
    """Assemble all operators needed by the time stepper and the audits."""
    if hooke.dim != mesh.dim:
        raise ValueError("elasticity and mesh dimensions differ")
    d = mesh.dim
    S_facets = np.asarray(S_facets, dtype=float)
    if S_facets.ndim == 2:
        S_facets = np.repeat(S_facets[None], mesh.nf, axis=0)
    G = strain_matrix(mesh)
    vol = sp.diags(np.repeat(mesh.volumes, d * d))
    W = sp.kron(sp.diags(mesh.volumes), sp.csr_matrix(hooke.matrix()))
    stiffness = (G.T @ W @ G).tocsr()
    viscosity = (G.T @ vol @ G).tocsr()
    return Operators(
        mesh=mesh,
        hooke=hooke,
        strain=G,
        mass=mass_matrix(mesh),
        stiffness=0.5 * (stiffness + stiffness.T),
        viscosity=0.5 * (viscosity + viscosity.T),
        boundary=boundary_matrix(mesh, S_facets),
        facet_average=facet_average_matrix(mesh),
        facet_S=S_facets,
    )
