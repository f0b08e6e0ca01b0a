"""Scaled monomial bases and polygon/segment quadrature."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg
from scipy.special import roots_jacobi


def dim_poly(k: int) -> int:
    """Dimension of P_k in two variables."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@lru_cache(maxsize=None)
def exponents(k: int) -> tuple[tuple[int, int], ...]:
    """Monomial exponents ordered by total degree, then by decreasing x power."""
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True)
class CellBasis:
    """Monomials ((x - c) / h)^alpha up to total degree ``degree + 1``.

    ``degree`` is the VEM order k; the P_k block is the first ``dim_poly(k)``
    entries and the gradient range Grad P_{k+1} uses entries 1..dim_poly(k+1)-1.
    """

    degree: int
    center: np.ndarray
    scale: float

    @property
    def n_pk(self) -> int:
        return dim_poly(self.degree)

    @property
    def n_pk1(self) -> int:
        return dim_poly(self.degree + 1)

    @property
    def n_grad(self) -> int:
        return self.n_pk1 - 1

    def values(self, points: np.ndarray, degree: int | None = None) -> np.ndarray:
        deg = self.degree + 1 if degree is None else degree
        p = (np.atleast_2d(points) - self.center) / self.scale
        ex = np.array(exponents(deg))
        return p[:, None, 0] ** ex[None, :, 0] * p[:, None, 1] ** ex[None, :, 1]

    def gradients(self, points: np.ndarray, degree: int | None = None) -> np.ndarray:
        """Array of shape (npts, nmono, 2)."""
        deg = self.degree + 1 if degree is None else degree
        p = (np.atleast_2d(points) - self.center) / self.scale
        ex = np.array(exponents(deg))
        a, b = ex[:, 0], ex[:, 1]
        x, y = p[:, None, 0], p[:, None, 1]
        # clip exponents so 0 * x**-1 never evaluates
        gx = a * x ** np.maximum(a - 1, 0) * y**b
        gy = b * x**a * y ** np.maximum(b - 1, 0)
        return np.stack([gx, gy], axis=-1) / self.scale

    def grad_pkp1(self, points: np.ndarray) -> np.ndarray:
        """Gradients of the nonconstant degree-(k+1) monomials, (npts, n_grad, 2)."""
        return self.gradients(points)[:, 1:, :]


def polygon_area_centroid(vertices: np.ndarray) -> tuple[float, np.ndarray]:
    v0 = np.asarray(vertices, dtype=float)
    # shift to the vertex mean to avoid cancellation for small, far-off cells
    o = v0.mean(axis=0)
    v = v0 - o
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area = 0.5 * cross.sum()
    c = ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * area)
    return area, c + o


def polygon_diameter(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float)
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def cell_basis(vertices: np.ndarray, k: int) -> CellBasis:
    _, c = polygon_area_centroid(vertices)
    return CellBasis(k, c, polygon_diameter(vertices))


@lru_cache(maxsize=None)
def _collapsed_rule(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Duffy-collapsed Gauss rule on the reference triangle, exact to degree 2n-1."""
    xu, wu = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + xu)
    wu = 0.25 * wu
    xv, wv = legendre.leggauss(n)
    v = 0.5 * (1.0 + xv)
    wv = 0.5 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    w = np.outer(wu, wv).ravel()
    # reference triangle area is 1/2; w sums to 1/2
    return xi, eta, w


def triangle_quadrature(p0, p1, p2, order: int) -> QuadratureRule:
    n = max(1, (order + 2) // 2)
    xi, eta, w = _collapsed_rule(n)
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    e1, e2 = p1 - p0, p2 - p0
    jac = e1[0] * e2[1] - e1[1] * e2[0]
    pts = p0 + xi[:, None] * e1 + eta[:, None] * e2
    return QuadratureRule(pts, w * jac, order)


def cell_quadrature(vertices: np.ndarray, order: int) -> QuadratureRule:
    """Centroid-fan quadrature on a polygon star-shaped w.r.t. its centroid."""
    if order < 0:
        raise ValueError("quadrature order must be >= 0")
    v = np.asarray(vertices, dtype=float)
    _, c = polygon_area_centroid(v)
    w_next = np.roll(v, -1, axis=0)
    sub = (v[:, 0] - c[0]) * (w_next[:, 1] - c[1]) - (v[:, 1] - c[1]) * (w_next[:, 0] - c[0])
    if np.any(sub <= 0.0):
        raise ValueError("polygon is not star-shaped with respect to its centroid")
    n = max(1, (order + 2) // 2)
    xi, eta, w = _collapsed_rule(n)
    e1 = v - c
    e2 = w_next - c
    pts = c + xi[None, :, None] * e1[:, None, :] + eta[None, :, None] * e2[:, None, :]
    wts = w[None, :] * sub[:, None]
    return QuadratureRule(pts.reshape(-1, 2), wts.ravel(), order)


def edge_quadrature(a, b, order: int) -> QuadratureRule:
    """Gauss-Legendre rule on segment [a, b]; ``points`` are 2D, exact for P_order."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise ValueError("zero-length edge")
    s, w = gauss_legendre01(order // 2 + 1)
    return QuadratureRule(a + s[:, None] * (b - a), w * length, order)


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_legendre(s: np.ndarray, k: int, length: float) -> np.ndarray:
    """Orthonormal Legendre basis on an edge of given length, at parameters s in [0, 1].

    Returns shape (len(s), k+1); the columns are L2(e)-orthonormal.
    """
    s = np.atleast_1d(s)
    t = 2.0 * s - 1.0
    out = np.empty((s.size, k + 1))
    for i in range(k + 1):
        c = np.zeros(i + 1)
        c[i] = 1.0
        out[:, i] = legendre.legval(t, c) * np.sqrt((2 * i + 1) / length)
    return out


def mass_matrix(basis: CellBasis, rule: QuadratureRule, degree: int | None = None) -> np.ndarray:
    phi = basis.values(rule.points, degree)
    return (phi * rule.weights[:, None]).T @ phi


def grad_gram(basis: CellBasis, rule: QuadratureRule) -> np.ndarray:
    """G_ij = (grad m_i, grad m_j)_E over the nonconstant degree-(k+1) monomials."""
    if rule.order < 2 * basis.degree:
        raise ValueError("quadrature order too low for the gradient Gram matrix")
    g = basis.grad_pkp1(rule.points)
    G = np.einsum("q,qia,qja->ij", rule.weights, g, g)
    G = 0.5 * (G + G.T)
    try:
        linalg.cholesky(G)
    except linalg.LinAlgError as exc:
        raise ValueError("singular gradient Gram matrix (degenerate cell)") from exc
    return G
