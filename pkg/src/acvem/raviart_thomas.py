"""Lowest-order Raviart-Thomas reference on triangles.

For k = 0 the virtual space on a triangle is RT0, so these closed-form basis
functions give an independent check of the local divergence, the stiffness and
the exact L2 mass that the virtual element mass only approximates.

Basis function i is dual to local DOF i (moment of v . n against the constant
orthonormal edge polynomial 1/sqrt|e_i|), so its total flux through edge i is
sqrt|e_i| and zero through the others.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .meshgen import Mesh
from .vemspace import DofMap, build_dofmap


def _check_triangle(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.shape != (3, 2):
        raise ValueError("RT0 reference requires a triangle")
    return v


def rt0_basis(vertices: np.ndarray):
    """Callables phi_i(points) -> (n, 2), plus constant divergences."""
    v = _check_triangle(vertices)
    area = 0.5 * ((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))
    length = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    coef = np.sqrt(length) / (2.0 * area)
    # edge i runs from vertex i to i+1; the opposite vertex is i+2
    opp = v[[2, 0, 1]]

    def make(i):
        return lambda x: coef[i] * (np.atleast_2d(x) - opp[i])

    return [make(i) for i in range(3)], 2.0 * coef


def rt0_div(vertices: np.ndarray) -> np.ndarray:
    """Divergence of each local basis function (constant): sqrt|e_i| / |T|."""
    return rt0_basis(vertices)[1]


def rt0_mass(vertices: np.ndarray) -> np.ndarray:
    """Exact L2 Gram matrix of the local RT0 basis (second-moment formula)."""
    v = _check_triangle(vertices)
    area = 0.5 * ((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))
    length = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    coef = np.sqrt(length) / (2.0 * area)
    opp = v[[2, 0, 1]]
    c = v.mean(axis=0)
    # int_T (x - c) (x - c)^T = |T|/12 * sum_j (v_j - c)(v_j - c)^T
    d = v - c
    second = area / 12.0 * np.einsum("ja,jb->ab", d, d)
    trace2 = np.trace(second)
    M = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            a, b = c - opp[i], c - opp[j]
            M[i, j] = coef[i] * coef[j] * (trace2 + area * a @ b)
    return M


def rt0_stiffness(vertices: np.ndarray) -> np.ndarray:
    d = rt0_div(vertices)
    v = _check_triangle(vertices)
    e1, e2 = v[1] - v[0], v[2] - v[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    return area * np.outer(d, d)


def rt0_global_mass(mesh: Mesh, dofmap: DofMap | None = None) -> sparse.csr_matrix:
    """Exact L2 mass of the global k = 0 space on a triangulation."""
    dofmap = build_dofmap(mesh, 0) if dofmap is None else dofmap
    if dofmap.k != 0:
        raise ValueError("RT0 mass needs the k = 0 DOF map")
    if np.any(np.diff(mesh.cell_ptr) != 3):
        raise ValueError("RT0 mass requires a triangular mesh")
    rows, cols, vals = [], [], []
    for c in range(mesh.n_cells):
        idx, sgn = dofmap.cell_dofs(c)
        M = rt0_mass(mesh.cell_coords(c)) * np.outer(sgn, sgn)
        ok = idx >= 0
        ii, jj = np.meshgrid(idx[ok], idx[ok], indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(M[np.ix_(ok, ok)].ravel())
    n = dofmap.n_dofs
    M = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    return ((M + M.T) * 0.5).tocsr()
