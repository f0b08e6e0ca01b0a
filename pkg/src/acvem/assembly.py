"""Element operators (divergence, gradient projector, mass, stabilizer) and global assembly.

All local quantities are expressed in the scaled monomial basis of the cell and
act on local DOF vectors (see :mod:`acvem.vemspace`).  Congruent cells share
their operators through a translation-invariant shape cache.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .io import atomic_write_text
from .meshgen import Mesh
from .polyquad import grad_gram, mass_matrix
from .vemspace import DofMap, LocalSpace, build_dofmap

STAB_MODES = ("projected", "raw")


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _chol_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        c = linalg.cho_factor(mat)
    except linalg.LinAlgError as exc:
        raise ValueError(f"singular {what} (degenerate cell)") from exc
    return linalg.cho_solve(c, rhs)


@dataclass(frozen=True)
class ElementOperators:
    """Local operators of one cell, acting on local DOFs.

    ``div_matrix`` maps DOFs to P_k coefficients of div v; ``proj_matrix`` maps
    DOFs to the coefficients of the projection in the basis grad m_1, ...;
    ``proj_dofs`` is the DOF vector of that projection as a field in V_h^E.
    """

    k: int
    div_matrix: np.ndarray
    proj_matrix: np.ndarray
    proj_dofs: np.ndarray
    pk_mass: np.ndarray
    gram: np.ndarray
    boundary: np.ndarray
    mix_mass: np.ndarray
    flux: np.ndarray
    K: np.ndarray
    M0: np.ndarray
    S_raw: np.ndarray
    S_proj: np.ndarray
    sigma: float

    @property
    def ndof(self) -> int:
        return self.K.shape[0]

    @property
    def S(self) -> np.ndarray:
        return self.S_proj

    def mass(self, stabilized: bool, stab_mode: str = "projected") -> np.ndarray:
        if not stabilized:
            return self.M0
        if stab_mode == "projected":
            return self.M0 + self.S_proj
        if stab_mode == "raw":
            return self.M0 + self.S_raw
        raise ValueError(f"unknown stab_mode {stab_mode!r}")

    def gradient_moments(self, x: np.ndarray) -> np.ndarray:
        """(v, grad m_g)_E for the nonconstant degree-(k+1) monomials, from DOFs."""
        nm = self.boundary.shape[0]
        return -self.mix_mass @ (self.div_matrix @ x) + self.boundary[1:nm] @ x


def _div_rhs(space: LocalSpace) -> np.ndarray:
    """R[a] maps DOFs to int_E div(v) m_a for a in P_k."""
    nk = space.basis.n_pk
    R = np.array(space.boundary_moments[:nk])
    R[1:, space.n_edge_dofs :] -= np.eye(nk - 1)
    return R


def local_div(vertices: np.ndarray, k: int, space: LocalSpace | None = None) -> np.ndarray:
    """Matrix mapping local DOFs to the P_k coefficients of div v_h.

    Uses int_E div(v) m = -int_E v . grad m + int_dE (v . n) m.
    """
    space = LocalSpace(vertices, k) if space is None else space
    Mk = mass_matrix(space.basis, space.rule, k)
    return _chol_solve(_sym(Mk), _div_rhs(space), "P_k mass matrix")


def local_projector(vertices: np.ndarray, k: int, space: LocalSpace | None = None) -> np.ndarray:
    """Matrix mapping local DOFs to the coefficients of the L2 projection onto Grad P_{k+1}."""
    return local_matrices(vertices, k, 0.0, space=space).proj_matrix


def local_matrices(
    vertices: np.ndarray, k: int, sigma: float = 0.0, space: LocalSpace | None = None
) -> ElementOperators:
    if sigma < 0:
        raise ValueError("sigma_E must be nonnegative")
    space = LocalSpace(vertices, k) if space is None else space
    basis, rule = space.basis, space.rule
    nk, nm = basis.n_pk, basis.n_pk1
    M_all = mass_matrix(basis, rule, k + 1)  # (nm, nm)
    Mk = _sym(M_all[:nk, :nk])
    R = _div_rhs(space)
    Dc = _chol_solve(Mk, R, "P_k mass matrix")
    G = grad_gram(basis, rule)
    Bd = space.boundary_moments
    mix = M_all[1:nm, :nk]
    r = -mix @ Dc + Bd[1:nm]
    Pc = _chol_solve(G, r, "gradient Gram matrix")
    K = _sym(Dc.T @ Mk @ Dc)
    M0 = _sym(Pc.T @ G @ Pc)
    Dg = space.gradient_dofs()
    Pi = Dg @ Pc
    F = space.flux_functionals()
    S_raw = _sym(sigma * F @ F.T)
    Q = np.eye(space.ndof) - Pi
    S_proj = _sym(Q.T @ S_raw @ Q)
    return ElementOperators(k, Dc, Pc, Pi, Mk, G, Bd, mix, F, K, M0, S_raw, S_proj, float(sigma))


class OperatorCache:
    """Shares element operators between congruent, equally ordered cells."""

    def __init__(self, k: int, sigma: float, scale: float = 1.0, rel_tol: float = 1e-13):
        self.k = k
        self.sigma = sigma
        self.q = rel_tol * scale
        self.store: dict[tuple, ElementOperators] = {}
        self.hits = 0

    def key(self, vertices: np.ndarray) -> tuple:
        rel = vertices - vertices[0]
        return (len(vertices),) + tuple(np.round(rel.ravel() / self.q).astype(np.int64).tolist())

    def get(self, vertices: np.ndarray) -> tuple[tuple, ElementOperators]:
        key = self.key(vertices)
        ops = self.store.get(key)
        if ops is None:
            ops = local_matrices(vertices, self.k, self.sigma)
            self.store[key] = ops
        else:
            self.hits += 1
        return key, ops


@dataclass(frozen=True)
class GlobalPencil:
    """Global stiffness A and mass B (B0 + stabilizer if requested).

    ``Dm`` stacks signed per-cell divergence moments (rows: cell c, monomial a)
    and ``Mp`` is the block-diagonal P_k mass, so that ``A = Dm.T Mp^-1 Dm``.
    """

    A: sparse.csr_matrix
    B: sparse.csr_matrix
    B0: sparse.csr_matrix
    dofmap: DofMap
    stabilized: bool
    sigma: float
    stab_mode: str
    Dm: sparse.csr_matrix
    Mp: sparse.csr_matrix

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh


def _gather(dofmap: DofMap, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index and sign arrays (ncells, ndof) for cells of equal edge count."""
    mesh = dofmap.mesh
    k = dofmap.k
    kk = k + 1
    start = mesh.cell_ptr[cells]
    m = int(mesh.cell_ptr[cells[0] + 1] - start[0])
    pos = start[:, None] + np.arange(m)[None, :]
    edges = mesh.cell_edges[pos]
    esign = mesh.cell_edge_signs[pos].astype(float)
    i = np.arange(kk)
    off = dofmap.edge_offset[edges]  # (nc, m)
    idx = np.where(off[..., None] >= 0, off[..., None] + i, -1).reshape(len(cells), -1)
    sgn = (esign[..., None] ** (i + 1)).reshape(len(cells), -1)
    nin = dofmap.n_interior_per_cell
    if nin:
        cin = dofmap.cell_offset[cells][:, None] + np.arange(nin)[None, :]
        idx = np.concatenate([idx, cin], axis=1)
        sgn = np.concatenate([sgn, np.ones((len(cells), nin))], axis=1)
    return idx, sgn


def _coo(rows: list, cols: list, vals: list, shape) -> sparse.csr_matrix:
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sparse.coo_matrix((v, (r, c)), shape=shape).tocsr()


def element_operators(mesh: Mesh, k: int, sigma: float = 0.0) -> tuple[list[ElementOperators], np.ndarray]:
    """Operators per distinct cell shape and the shape index of every cell."""
    xmin, ymin, xmax, ymax = mesh.domain.bbox
    cache = OperatorCache(k, sigma, scale=max(xmax - xmin, ymax - ymin))
    keys: dict[tuple, int] = {}
    shape_of = np.empty(mesh.n_cells, dtype=np.int64)
    ops_list: list[ElementOperators] = []
    for c in range(mesh.n_cells):
        key, ops = cache.get(mesh.cell_coords(c))
        j = keys.get(key)
        if j is None:
            j = keys[key] = len(ops_list)
            ops_list.append(ops)
        shape_of[c] = j
    return ops_list, shape_of


def assemble(
    mesh: Mesh,
    k: int,
    sigma: float = 0.0,
    stabilized: bool = False,
    stab_mode: str = "projected",
    dofmap: DofMap | None = None,
) -> GlobalPencil:
    """Assemble the global pencil; boundary DOFs are eliminated."""
    if stab_mode not in STAB_MODES:
        raise ValueError(f"stab_mode must be one of {STAB_MODES}")
    if sigma < 0:
        raise ValueError("sigma_E must be nonnegative")
    dofmap = build_dofmap(mesh, k) if dofmap is None else dofmap
    if dofmap.k != k or dofmap.mesh is not mesh:
        raise ValueError("dofmap does not belong to this mesh/order")
    n = dofmap.n_dofs
    ops_list, shape_of = element_operators(mesh, k, sigma if stabilized else 0.0)
    nk = ops_list[0].pk_mass.shape[0] if ops_list else 1
    rowsA, colsA, valsA = [], [], []
    valsB, valsB0 = [], []
    rD, cD, vD = [], [], []
    rP, cP, vP = [], [], []
    for shape in range(len(ops_list)):
        cells = np.flatnonzero(shape_of == shape)
        ops = ops_list[shape]
        idx, sgn = _gather(dofmap, cells)
        if idx.max(initial=-1) >= n:
            raise IndexError("DOF index out of range (corrupt dofmap)")
        ok = idx >= 0
        nd = idx.shape[1]
        ii = np.broadcast_to(idx[:, :, None], (len(cells), nd, nd))
        jj = np.broadcast_to(idx[:, None, :], (len(cells), nd, nd))
        ss = sgn[:, :, None] * sgn[:, None, :]
        mask = ok[:, :, None] & ok[:, None, :]
        rowsA.append(ii[mask])
        colsA.append(jj[mask])
        valsA.append((ss * ops.K)[mask])
        valsB0.append((ss * ops.M0)[mask])
        if stabilized:
            valsB.append((ss * ops.mass(True, stab_mode))[mask])
        # divergence moments R = Mk Dc
        Rm = ops.pk_mass @ ops.div_matrix  # (nk, nd)
        rows = cells[:, None] * nk + np.arange(nk)[None, :]
        ri = np.broadcast_to(rows[:, :, None], (len(cells), nk, nd))
        ci = np.broadcast_to(idx[:, None, :], (len(cells), nk, nd))
        vv = sgn[:, None, :] * Rm
        mk = np.broadcast_to(ok[:, None, :], (len(cells), nk, nd))
        rD.append(ri[mk])
        cD.append(ci[mk])
        vD.append(vv[mk])
        pr = np.broadcast_to(rows[:, :, None], (len(cells), nk, nk))
        pc = np.broadcast_to(rows[:, None, :], (len(cells), nk, nk))
        rP.append(pr.ravel())
        cP.append(pc.ravel())
        vP.append(np.broadcast_to(ops.pk_mass, (len(cells), nk, nk)).ravel())
    A = _coo(rowsA, colsA, valsA, (n, n))
    B0 = _exact_sym(_coo(rowsA, colsA, valsB0, (n, n)))
    B = _exact_sym(_coo(rowsA, colsA, valsB, (n, n))) if stabilized else B0
    npk = mesh.n_cells * nk
    Dm = _coo(rD, cD, vD, (npk, n))
    Mp = _coo(rP, cP, vP, (npk, npk))
    # summation order of duplicates may differ between (i, j) and (j, i)
    A = _exact_sym(A)
    return GlobalPencil(A, B, B0, dofmap, stabilized, float(sigma), stab_mode, Dm, Mp)


def _exact_sym(m: sparse.csr_matrix) -> sparse.csr_matrix:
    m = ((m + m.T) * 0.5).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def export_coo(matrix: sparse.spmatrix, path: str | Path) -> None:
    """Write ``row col value`` lines, 0-based, in row-major order."""
    m = sparse.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    lines = [f"# {m.shape[0]} {m.shape[1]} {m.nnz}"]
    lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(m.row[order], m.col[order], m.data[order])]
    atomic_write_text(path, "\n".join(lines) + "\n")
