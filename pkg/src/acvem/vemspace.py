"""Local and global VEM spaces: degrees of freedom, numbering, interpolation.

Local DOFs of a cell with m edges, in this order:

* for each edge j (from vertex j to j+1), the k+1 moments
  ``int_e (v . n_E) L_i ds`` against the orthonormal Legendre basis
  parametrised in the cell's counterclockwise direction, n_E outward;
* the ``dim P_k - 1`` interior moments ``int_E v . grad m_a`` for the
  nonconstant scaled monomials of degree <= k.

Global edge DOFs use the stored direction and normal of the global edge.  If a
cell traverses the edge against it (sign s = -1), both the normal and the
Legendre parameter flip, so ``global_i = s**(i+1) * local_i``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .meshgen import Mesh
from .polyquad import (
    CellBasis,
    cell_basis,
    cell_quadrature,
    dim_poly,
    edge_legendre,
    gauss_legendre01,
    polygon_area_centroid,
)

VectorField = Callable[[np.ndarray], np.ndarray]


def local_dim(n_edges: int, k: int) -> int:
    return (k + 1) * n_edges + dim_poly(k) - 1


class LocalSpace:
    """Geometry, bases and quadrature for one cell in local DOF convention."""

    def __init__(self, vertices: np.ndarray, k: int, quad_order: int | None = None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.k = k
        self.m = len(self.vertices)
        self.area, self.centroid = polygon_area_centroid(self.vertices)
        self.basis: CellBasis = cell_basis(self.vertices, k)
        self.quad_order = 2 * (k + 1) + 2 if quad_order is None else quad_order
        self.rule = cell_quadrature(self.vertices, self.quad_order)
        a = self.vertices
        b = np.roll(self.vertices, -1, axis=0)
        t = b - a
        self.edge_length = np.hypot(t[:, 0], t[:, 1])
        self.edge_normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.edge_length[:, None]
        s, w = gauss_legendre01(k + 2)
        self.edge_s = s
        # (m, nq, 2) points and (m, nq) weights
        self.edge_points = a[:, None, :] + s[None, :, None] * t[:, None, :]
        self.edge_weights = w[None, :] * self.edge_length[:, None]
        self.edge_basis = np.stack(
            [edge_legendre(s, k, self.edge_length[j]) for j in range(self.m)]
        )  # (m, nq, k+1)

    @property
    def n_edge_dofs(self) -> int:
        return self.m * (self.k + 1)

    @property
    def ndof(self) -> int:
        return local_dim(self.m, self.k)

    @cached_property
    def boundary_moments(self) -> np.ndarray:
        """Bd[g, dof] = int_e L_i m_g ds for monomials of degree <= k+1 (zero on interior DOFs).

        With x the local DOF vector, ``Bd @ x`` gives ``int_{dE} (v . n) m_g``.
        """
        nm = self.basis.n_pk1
        Bd = np.zeros((nm, self.ndof))
        for j in range(self.m):
            mv = self.basis.values(self.edge_points[j])  # (nq, nm)
            blk = (mv * self.edge_weights[j][:, None]).T @ self.edge_basis[j]
            Bd[:, j * (self.k + 1) : (j + 1) * (self.k + 1)] = blk
        return Bd

    def dofs_of(self, field: VectorField) -> np.ndarray:
        """Local DOF values of a vector field by quadrature of the defining moments."""
        x = np.empty(self.ndof)
        kk = self.k + 1
        for j in range(self.m):
            u = np.asarray(field(self.edge_points[j]), dtype=float)
            un = u @ self.edge_normal[j]
            x[j * kk : (j + 1) * kk] = (un * self.edge_weights[j]) @ self.edge_basis[j]
        if self.basis.n_pk > 1:
            u = np.asarray(field(self.rule.points), dtype=float)
            g = self.basis.gradients(self.rule.points, self.k)[:, 1:, :]
            x[self.n_edge_dofs :] = np.einsum("q,qa,qia->i", self.rule.weights, u, g)
        return x

    def gradient_dofs(self) -> np.ndarray:
        """Columns are the local DOFs of grad m_b for the nonconstant degree-(k+1) monomials."""
        nm = self.basis.n_pk1
        D = np.empty((self.ndof, nm - 1))
        kk = self.k + 1
        for j in range(self.m):
            g = self.basis.grad_pkp1(self.edge_points[j])  # (nq, nm-1, 2)
            gn = g @ self.edge_normal[j]
            D[j * kk : (j + 1) * kk] = self.edge_basis[j].T @ (gn * self.edge_weights[j][:, None])
        if self.basis.n_pk > 1:
            gq = self.basis.grad_pkp1(self.rule.points)
            ga = self.basis.gradients(self.rule.points, self.k)[:, 1:, :]
            D[self.n_edge_dofs :] = np.einsum("q,qia,qja->ij", self.rule.weights, ga, gq)
        return D

    def flux_functionals(self) -> np.ndarray:
        """F[:, j] maps local DOFs to the total outward flux through edge j."""
        F = np.zeros((self.ndof, self.m))
        for j in range(self.m):
            F[j * (self.k + 1), j] = np.sqrt(self.edge_length[j])
        return F


@dataclass(frozen=True)
class DofMap:
    """Global numbering: interior edges first (k+1 each, by edge index), then cells.

    ``edge_offset[e]`` is the first global DOF of edge e or -1 when the edge lies
    on the boundary (its DOFs are eliminated to impose v . n = 0).
    """

    k: int
    mesh: Mesh
    edge_offset: np.ndarray
    cell_offset: np.ndarray
    n_dofs: int

    @property
    def n_edge_dofs_per_edge(self) -> int:
        return self.k + 1

    @property
    def n_interior_per_cell(self) -> int:
        return dim_poly(self.k) - 1

    def cell_dofs(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Global indices (-1 = eliminated) and signs for the local DOFs of cell c."""
        edges, esign = self.mesh.local_edges(c)
        kk = self.k + 1
        i = np.arange(kk)
        off = self.edge_offset[edges]
        idx = np.where(off[:, None] >= 0, off[:, None] + i[None, :], -1).ravel()
        sgn = (esign[:, None].astype(float) ** (i[None, :] + 1)).ravel()
        nin = self.n_interior_per_cell
        idx = np.concatenate([idx, self.cell_offset[c] + np.arange(nin)])
        sgn = np.concatenate([sgn, np.ones(nin)])
        return idx, sgn

    def local_to_global(self, c: int, x_local: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx, sgn = self.cell_dofs(c)
        return idx, sgn * x_local

    def global_to_local(self, c: int, x: np.ndarray) -> np.ndarray:
        idx, sgn = self.cell_dofs(c)
        out = np.zeros(len(idx))
        ok = idx >= 0
        out[ok] = sgn[ok] * x[idx[ok]]
        return out

    @property
    def boundary_mask(self) -> np.ndarray:
        """Per global edge: True if its DOFs are eliminated."""
        return self.edge_offset < 0


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    if k < 0:
        raise ValueError("order k must be >= 0")
    kk = k + 1
    interior = ~mesh.boundary_edges
    edge_offset = -np.ones(mesh.n_edges, dtype=np.int64)
    edge_offset[interior] = kk * np.arange(int(interior.sum()))
    n_edge = kk * int(interior.sum())
    nin = dim_poly(k) - 1
    cell_offset = n_edge + nin * np.arange(mesh.n_cells, dtype=np.int64)
    n = n_edge + nin * mesh.n_cells
    return DofMap(k, mesh, edge_offset, cell_offset, n)


@dataclass(frozen=True)
class DofVector:
    values: np.ndarray
    dofmap: DofMap

    def __post_init__(self):
        if len(self.values) != self.dofmap.n_dofs:
            raise ValueError("DOF vector length does not match the DOF map")

    def to_csv(self) -> str:
        return "\n".join(f"{v:.17g}" for v in self.values) + "\n"


def global_edge_moments(mesh: Mesh, e: int, k: int, field: VectorField) -> np.ndarray:
    """Moments of field . n_g against the Legendre basis in the global edge direction."""
    a, b = mesh.vertices[mesh.edges[e]]
    s, w = gauss_legendre01(k + 8)
    length = float(np.hypot(*(b - a)))
    pts = a + s[:, None] * (b - a)
    un = np.asarray(field(pts), dtype=float) @ mesh.edge_normals[e]
    return (un * w * length) @ edge_legendre(s, k, length)


def interpolate(
    field: VectorField, mesh: Mesh, k: int, dofmap: DofMap | None = None, quad_extra: int = 6
) -> DofVector:
    """DOF vector of ``field`` (callable mapping (n, 2) points to (n, 2) values).

    Moments on boundary edges are dropped; if they are not numerically zero a
    warning reports the largest one.
    """
    dofmap = build_dofmap(mesh, k) if dofmap is None else dofmap
    x = np.zeros(dofmap.n_dofs)
    kk = k + 1
    worst = 0.0
    for e in range(mesh.n_edges):
        mom = global_edge_moments(mesh, e, k, field)
        off = dofmap.edge_offset[e]
        if off < 0:
            worst = max(worst, float(np.abs(mom).max()))
        else:
            x[off : off + kk] = mom
    nin = dofmap.n_interior_per_cell
    if nin:
        for c in range(mesh.n_cells):
            verts = mesh.cell_coords(c)
            basis = cell_basis(verts, k)
            rule = cell_quadrature(verts, 2 * k + 2 + quad_extra)
            u = np.asarray(field(rule.points), dtype=float)
            g = basis.gradients(rule.points, k)[:, 1:, :]
            off = dofmap.cell_offset[c]
            x[off : off + nin] = np.einsum("q,qa,qia->i", rule.weights, u, g)
    scale = max(1.0, float(np.abs(x).max()) if len(x) else 1.0)
    if worst > 1e-10 * scale:
        warnings.warn(
            f"field has nonzero normal trace on the boundary (max moment {worst:.3e}); dropped",
            stacklevel=2,
        )
    return DofVector(x, dofmap)


def edge_normal_poly(dofs: DofVector, e: int) -> np.ndarray:
    """Coefficients of v . n_g on edge e in its orthonormal Legendre basis.

    Eliminated (boundary) edges return the zero polynomial.
    """
    dm = dofs.dofmap
    off = dm.edge_offset[e]
    if off < 0:
        return np.zeros(dm.k + 1)
    return np.array(dofs.values[off : off + dm.k + 1])


def evaluate_edge_poly(mesh: Mesh, e: int, coeffs: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Value of the edge polynomial at parameters s in [0, 1] along the global direction."""
    return edge_legendre(s, len(coeffs) - 1, float(mesh.edge_lengths[e])) @ coeffs
