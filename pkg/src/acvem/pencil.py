"""Symmetric PSD pencil A x = lambda B x: kernel diagnostics, deflation and solvers.

Dense path: eigendecompose A + B = U W U^T, keep the columns with W above the
rank tolerance (this deflates ker A cap ker B), and solve the standard problem
W^-1/2 U^T B U W^-1/2 z = theta z.  Then lambda = (1 - theta) / theta.

Sparse path (regular pencils only): A = Dm^T Mp^-1 Dm, so the nonzero spectrum
is that of the pressure pencil S q = lambda Mp q with S = Dm B^+ Dm^T.  Lanczos
runs on Mp^1/2 (S + s Mp)^-1 Mp^1/2, and each application costs one solve with
C = B + A / s, which is positive definite for a regular pencil.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .assembly import GlobalPencil
from .io import atomic_write_text
from .polyquad import dim_poly

log = logging.getLogger(__name__)

DENSE_LIMIT = 2500


@dataclass(frozen=True)
class KernelReport:
    n: int
    dim_ker_A: int
    dim_ker_B: int
    dim_intersection: int
    rank_tol: float

    @property
    def regular(self) -> bool:
        return self.dim_intersection == 0

    @property
    def status(self) -> str:
        return "regular" if self.regular else f"singular({self.dim_intersection})"


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns, full (undeflated) DOF space
    residuals: np.ndarray
    n_zero_discarded: int
    n_infinite: int
    pencil_status: str
    deflated: bool
    normalization: str  # "B" or "A"
    method: str
    report: KernelReport | None = None
    warnings: list[str] = field(default_factory=list)
    full_residuals: np.ndarray | None = None

    @property
    def scaled(self) -> np.ndarray:
        return self.eigenvalues / np.pi**2

    def to_csv(self) -> str:
        lines = [
            f"# pencil_status={self.pencil_status} deflated={self.deflated} "
            f"normalization={self.normalization} method={self.method} "
            f"n_zero_discarded={self.n_zero_discarded}",
            "index,lambda,lambda_scaled,residual",
        ]
        for i, (lam, r) in enumerate(zip(self.eigenvalues, self.residuals), start=1):
            lines.append(f"{i},{lam:.15e},{lam / np.pi**2:.15e},{r:.3e}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def _as_dense(m) -> np.ndarray:
    return m.toarray() if sparse.issparse(m) else np.asarray(m, dtype=float)


def _norm1(m: np.ndarray) -> float:
    return float(np.abs(m).sum(axis=0).max()) if m.size else 0.0


def _null_dim(m: np.ndarray, rank_tol: float) -> int:
    if m.shape[0] == 0:
        return 0
    w = linalg.eigvalsh(m)
    return int(np.sum(w <= rank_tol * max(_norm1(m), np.finfo(float).tiny)))


def kernel_report(A, B, rank_tol: float = 1e-10, sum_eigenvalues: np.ndarray | None = None) -> KernelReport:
    """Kernel dimensions from symmetric eigenvalue rank tests on A, B and A + B.

    ``sum_eigenvalues`` may pass precomputed eigenvalues of A + B.
    """
    A = _as_dense(A)
    B = _as_dense(B)
    n = A.shape[0]
    C = A + B
    if sum_eigenvalues is None:
        inter = _null_dim(C, rank_tol)
    else:
        inter = int(np.sum(sum_eigenvalues <= rank_tol * max(_norm1(C), np.finfo(float).tiny)))
    return KernelReport(
        n=n,
        dim_ker_A=_null_dim(A, rank_tol),
        dim_ker_B=_null_dim(B, rank_tol),
        dim_intersection=inter,
        rank_tol=rank_tol,
    )


def pencil_report(pencil: GlobalPencil, rank_tol: float = 1e-10) -> KernelReport:
    return kernel_report(pencil.A, pencil.B, rank_tol)


@dataclass(frozen=True)
class Deflation:
    """Orthonormal basis Q of the complement of ker A cap ker B, with Q^T (A+B) Q = diag(w)."""

    Q: np.ndarray
    w: np.ndarray
    intersection: np.ndarray
    all_w: np.ndarray

    @property
    def dim(self) -> int:
        return self.Q.shape[1]


def deflate(A, B, rank_tol: float = 1e-10) -> Deflation:
    """Orthonormal complement of the numerical kernel of A + B (eigenvalues below rank_tol * |A+B|_1)."""
    A = _as_dense(A)
    B = _as_dense(B)
    C = A + B
    w, U = linalg.eigh(C)
    keep = w > rank_tol * max(_norm1(C), np.finfo(float).tiny)
    if keep.sum() == 0 and C.shape[0] > 0:
        raise np.linalg.LinAlgError("complement of the common kernel is empty")
    return Deflation(U[:, keep], w[keep], U[:, ~keep], w)


def reduce_pencil(A, B, defl: Deflation) -> tuple[np.ndarray, np.ndarray]:
    A = _as_dense(A)
    B = _as_dense(B)
    return defl.Q.T @ A @ defl.Q, defl.Q.T @ B @ defl.Q


def _residuals(A, B, lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    nA = splinalg.norm(A, 1) if sparse.issparse(A) else _norm1(A)
    nB = splinalg.norm(B, 1) if sparse.issparse(B) else _norm1(B)
    R = A @ X - (B @ X) * lam[None, :]
    xn = np.linalg.norm(X, axis=0)
    return np.linalg.norm(R, axis=0) / ((nA + lam * nB) * np.maximum(xn, 1e-300))


def _normalize(A, B, X: np.ndarray, by: str) -> np.ndarray:
    M = B if by == "B" else A
    nrm = np.sqrt(np.maximum(np.einsum("ij,ij->j", X, M @ X), 1e-300))
    X = X / nrm
    # deterministic sign: largest-magnitude entry positive
    piv = np.abs(X).argmax(axis=0)
    return X * np.sign(X[piv, np.arange(X.shape[1])] + (X[piv, np.arange(X.shape[1])] == 0))


def solve_dense(
    A, B, n_eigs: int = 7, zero_tol: float = 1e-8, rank_tol: float = 1e-10, report: KernelReport | None = None
) -> EigenResult:
    A = _as_dense(A)
    B = _as_dense(B)
    defl = deflate(A, B, rank_tol)
    report = kernel_report(A, B, rank_tol, defl.all_w) if report is None else report
    Ar, Br = reduce_pencil(A, B, defl)
    s = 1.0 / np.sqrt(defl.w)
    H = s[:, None] * Br * s[None, :]
    H = 0.5 * (H + H.T)
    theta, Z = linalg.eigh(H)
    theta = theta[::-1]
    Z = Z[:, ::-1]
    trA, trB = np.trace(A), np.trace(B)
    lam_scale = trA / trB if trB > 0 else 1.0
    inf_mask = theta <= zero_tol
    with np.errstate(divide="ignore"):
        lam = np.where(inf_mask, np.inf, (1.0 - theta) / np.where(inf_mask, 1.0, theta))
    zero_mask = (~inf_mask) & (lam <= zero_tol * lam_scale)
    good = np.flatnonzero(~inf_mask & ~zero_mask)[:n_eigs]
    X = defl.Q @ (s[:, None] * Z[:, good])
    lam_g = lam[good]
    norm_by = "A" if report.dim_ker_B > 0 else "B"
    X = _normalize(A, B, X, norm_by)
    full = _residuals(A, B, lam_g, X)
    # after deflation the problem is posed on range(Q): test only against it
    res = _residuals(Ar, Br, lam_g, defl.Q.T @ X) if not report.regular else full
    return EigenResult(
        eigenvalues=lam_g,
        vectors=X,
        residuals=res,
        full_residuals=full,
        n_zero_discarded=int(zero_mask.sum()),
        n_infinite=int(inf_mask.sum()),
        pencil_status=report.status,
        deflated=not report.regular,
        normalization=norm_by,
        method="dense",
        report=report,
    )


def _blockdiag(blocks: np.ndarray) -> sparse.csr_matrix:
    nb, bs, _ = blocks.shape
    base = (np.arange(nb) * bs)[:, None, None]
    r = np.broadcast_to(base + np.arange(bs)[None, :, None], blocks.shape)
    c = np.broadcast_to(base + np.arange(bs)[None, None, :], blocks.shape)
    return sparse.csr_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(nb * bs, nb * bs))


def block_cholesky(Mp: sparse.csr_matrix, bs: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """L and L^-1 with Mp = L L^T, for block-diagonal SPD Mp with equal block sizes."""
    n = Mp.shape[0]
    nb = n // bs
    blocks = np.zeros((nb, bs, bs))
    Mc = Mp.tocoo()
    blocks[Mc.row // bs, Mc.row % bs, Mc.col % bs] = Mc.data
    L = np.linalg.cholesky(blocks)
    Linv = np.linalg.solve(L, np.broadcast_to(np.eye(bs), L.shape))
    return _blockdiag(L), _blockdiag(Linv)


def solve_sparse(
    pencil: GlobalPencil, n_eigs: int = 7, shift: float = 1.0, res_tol: float = 1e-8
) -> EigenResult:
    """Smallest nonzero eigenpairs of a regular pencil by Lanczos in pressure space."""
    A, B, Dm, Mp = pencil.A, pencil.B, pencil.Dm, pencil.Mp
    s = float(shift)
    C = (B + A / s).tocsc()
    try:
        lu = splinalg.splu(C, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"factorization of B + A/s failed: {exc}") from exc
    L, Linv = block_cholesky(Mp, dim_poly(pencil.dofmap.k))
    LT, LinvT = L.T.tocsr(), Linv.T.tocsr()
    DmT = Dm.T.tocsr()
    npres = Mp.shape[0]

    def apply(z: np.ndarray) -> np.ndarray:
        # T z = L^T (S + s M)^-1 L z via the saddle-point elimination
        minv_r = LinvT @ z
        x = lu.solve(DmT @ minv_r) / s
        y = (minv_r - LinvT @ (Linv @ (Dm @ x))) / s
        return LT @ y

    op = splinalg.LinearOperator((npres, npres), matvec=apply, dtype=float)
    nev = min(n_eigs + 1, npres - 1)
    v0 = np.random.default_rng(0).standard_normal(npres)
    mu, Z = splinalg.eigsh(op, k=nev, which="LA", tol=0.0, v0=v0)
    order = np.argsort(-mu)
    mu, Z = mu[order], Z[:, order]
    lam = 1.0 / mu - s
    trB = B.diagonal().sum()
    lam_scale = A.diagonal().sum() / trB if trB > 0 else 1.0
    keep = lam > 1e-8 * lam_scale
    lam, Z = lam[keep][:n_eigs], Z[:, keep][:, :n_eigs]
    Y = LinvT @ Z
    X = lu.solve(np.asfortranarray(DmT @ Y)) if len(lam) else np.zeros((A.shape[0], 0))
    X = _normalize(A, B, X, "B")
    res = _residuals(A, B, lam, X)
    full = res
    warn = []
    if np.any(res > res_tol):
        warn.append(f"residual above {res_tol:g}: max {res.max():.2e}")
        log.warning(warn[-1])
    return EigenResult(
        eigenvalues=lam,
        vectors=X,
        residuals=res,
        n_zero_discarded=int(A.shape[0] - (npres - 1)),
        n_infinite=0,
        pencil_status="regular",
        deflated=False,
        normalization="B",
        method="sparse",
        warnings=warn,
        full_residuals=full,
    )


def solve(
    pencil: GlobalPencil,
    n_eigs: int = 7,
    zero_tol: float = 1e-8,
    rank_tol: float = 1e-10,
    method: str = "auto",
) -> EigenResult:
    """Smallest ``n_eigs`` nonzero finite eigenpairs of the assembled pencil.

    ``method`` is ``dense``, ``sparse`` or ``auto`` (dense up to DENSE_LIMIT DOFs).
    The sparse path assumes a regular pencil; under ``auto`` a failed
    factorization or large residuals send the problem to the dense deflating path.
    """
    if method not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown method {method!r}")
    if method == "dense" or (method == "auto" and pencil.n <= DENSE_LIMIT):
        return solve_dense(pencil.A, pencil.B, n_eigs, zero_tol, rank_tol)
    if method == "sparse":
        return solve_sparse(pencil, n_eigs)
    try:
        res = solve_sparse(pencil, n_eigs)
    except np.linalg.LinAlgError as exc:
        reason = str(exc)
    else:
        if not res.warnings:
            return res
        reason = res.warnings[0]
    log.warning("sparse path rejected (%s); using the dense path", reason)
    out = solve_dense(pencil.A, pencil.B, n_eigs, zero_tol, rank_tol)
    out.warnings.append(f"sparse path rejected: {reason}")
    return out
