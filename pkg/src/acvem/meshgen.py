"""Polygonal mesh families on the rectangle and the L-shaped domain.

A :class:`Mesh` stores cells in compressed form (``cell_ptr``/``cell_verts``),
a global edge table with a fixed direction per edge, and for every local edge
of every cell the global edge index and the sign relating the cell's
counterclockwise traversal to the global direction.  The global unit normal of
an edge is the tangent rotated clockwise, so for a cell traversing the edge in
the global direction it is the outward normal.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi, cKDTree

FAMILIES = ("triangular", "square", "trapezoidal", "voronoi", "hexagonal")
DEFAULT_C_TAU = 0.05


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Rectangle:
    a: float = 1.0
    b: float = 1.1

    name = "rect"

    @property
    def area(self) -> float:
        return self.a * self.b

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return 0.0, 0.0, self.a, self.b

    def on_boundary(self, p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        p = np.atleast_2d(p)
        t = tol * max(self.a, self.b)
        return (
            (np.abs(p[:, 0]) < t)
            | (np.abs(p[:, 0] - self.a) < t)
            | (np.abs(p[:, 1]) < t)
            | (np.abs(p[:, 1] - self.b) < t)
        )


@dataclass(frozen=True)
class LShape:
    """(-1, 1)^2 minus the closed lower-right quadrant [0, 1) x (-1, 0]."""

    name = "lshape"

    @property
    def area(self) -> float:
        return 3.0

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return -1.0, -1.0, 1.0, 1.0

    def on_boundary(self, p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        p = np.atleast_2d(p)
        x, y = p[:, 0], p[:, 1]
        outer = (np.abs(np.abs(x) - 1) < tol) | (np.abs(np.abs(y) - 1) < tol)
        reentrant = ((np.abs(x) < tol) & (y <= tol)) | ((np.abs(y) < tol) & (x >= -tol))
        return outer | reentrant


Domain = Rectangle | LShape


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    cell_ptr: np.ndarray
    cell_verts: np.ndarray
    edges: np.ndarray
    edge_cells: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    domain: Domain = field(default_factory=Rectangle)
    family: str = "custom"
    level: int = 0

    @property
    def n_cells(self) -> int:
        return len(self.cell_ptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def cell(self, c: int) -> np.ndarray:
        return self.cell_verts[self.cell_ptr[c] : self.cell_ptr[c + 1]]

    def cell_coords(self, c: int) -> np.ndarray:
        return self.vertices[self.cell(c)]

    def local_edges(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        s = slice(self.cell_ptr[c], self.cell_ptr[c + 1])
        return self.cell_edges[s], self.cell_edge_signs[s]

    @property
    def cell_sizes(self) -> np.ndarray:
        return np.diff(self.cell_ptr)

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_cells[:, 1] < 0

    @property
    def edge_tangents(self) -> np.ndarray:
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(*self.edge_tangents.T)

    @property
    def edge_normals(self) -> np.ndarray:
        t = self.edge_tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1) / np.hypot(*t.T)[:, None]

    def cells(self) -> list[np.ndarray]:
        return [self.cell(c) for c in range(self.n_cells)]

    def cell_areas(self) -> np.ndarray:
        v = self.vertices[self.cell_verts]
        w = self.vertices[self.cell_verts[_next_index(self.cell_ptr)]]
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return 0.5 * np.add.reduceat(cross, self.cell_ptr[:-1])


def _next_index(ptr: np.ndarray) -> np.ndarray:
    """Index of the next vertex (cyclically) within each cell, for the flat array."""
    n = ptr[-1]
    nxt = np.arange(1, n + 1)
    nxt[ptr[1:] - 1] = ptr[:-1]
    return nxt


def build_mesh(
    vertices: np.ndarray,
    cells,
    domain: Domain,
    family: str = "custom",
    level: int = 0,
    c_tau: float | None = DEFAULT_C_TAU,
) -> Mesh:
    """Build the edge table for ``cells`` and validate every mesh invariant."""
    vertices = np.asarray(vertices, dtype=float)
    if isinstance(cells, tuple) and len(cells) == 2:
        ptr, flat = (np.asarray(x, dtype=np.int64) for x in cells)
    else:
        cells = [np.asarray(c, dtype=np.int64) for c in cells]
        ptr = np.concatenate([[0], np.cumsum([len(c) for c in cells])]).astype(np.int64)
        flat = np.concatenate(cells) if cells else np.zeros(0, dtype=np.int64)
    if np.any(np.diff(ptr) < 3):
        raise MeshError("cell with fewer than 3 vertices")
    edges, edge_cells, cell_edges, signs = edge_table(vertices, ptr, flat)
    mesh = Mesh(
        _freeze(vertices),
        _freeze(ptr),
        _freeze(flat),
        _freeze(edges),
        _freeze(edge_cells),
        _freeze(cell_edges),
        _freeze(signs),
        domain,
        family,
        level,
    )
    validate(mesh, c_tau)
    return mesh


def edge_table(vertices, ptr, flat):
    """Global edges (directed from lower to higher vertex index) and cell adjacency.

    Raises :class:`MeshError` on non-manifold edges.
    """
    nv = len(vertices)
    a = flat
    b = flat[_next_index(ptr)]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    if np.any(lo == hi):
        raise MeshError("repeated consecutive vertex in a cell")
    key = lo * nv + hi
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError(f"{int(np.sum(counts > 2))} non-manifold edge(s) shared by more than 2 cells")
    edges = np.stack([uniq // nv, uniq % nv], axis=1)
    signs = np.where(a == lo, 1, -1).astype(np.int8)
    cell_of = np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))
    edge_cells = -np.ones((len(uniq), 2), dtype=np.int64)
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv_sorted[1:] != inv_sorted[:-1]
    edge_cells[inv_sorted[first], 0] = cell_of[order[first]]
    edge_cells[inv_sorted[~first], 1] = cell_of[order[~first]]
    # two cells sharing an edge must traverse it in opposite directions
    both = edge_cells[:, 1] >= 0
    s_first = np.zeros(len(uniq), dtype=np.int64)
    s_first[inv_sorted[first]] = signs[order[first]]
    s_second = np.zeros(len(uniq), dtype=np.int64)
    s_second[inv_sorted[~first]] = signs[order[~first]]
    if np.any(s_first[both] == s_second[both]):
        raise MeshError("inconsistent orientation across an interior edge")
    return edges, edge_cells, inv.astype(np.int64), signs


def flip_edges(mesh: Mesh, idx) -> Mesh:
    """Copy of ``mesh`` with the stored direction (hence normal) of edges ``idx`` reversed."""
    idx = np.atleast_1d(idx)
    edges = mesh.edges.copy()
    edges[idx] = edges[idx, ::-1]
    signs = mesh.cell_edge_signs.copy()
    flip = np.isin(mesh.cell_edges, idx)
    signs[flip] = -signs[flip]
    return dataclasses.replace(mesh, edges=_freeze(edges), cell_edge_signs=_freeze(signs))


# ---------------------------------------------------------------------------
# validation and quality


def quality_report(mesh: Mesh) -> dict[str, np.ndarray]:
    """Per-cell diameter, shortest edge, area and regularity ratios.

    ``disk_ratio`` is the radius of the largest disk centred at the centroid
    and contained in the cell, divided by the diameter; it bounds the inradius
    from below and is the star-shapedness radius used by quadrature.
    """
    ptr, flat = mesh.cell_ptr, mesh.cell_verts
    v = mesh.vertices[flat]
    w = mesh.vertices[flat[_next_index(ptr)]]
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    starts = ptr[:-1]
    area = 0.5 * np.add.reduceat(cross, starts)
    cx = np.add.reduceat((v[:, 0] + w[:, 0]) * cross, starts) / (6 * area)
    cy = np.add.reduceat((v[:, 1] + w[:, 1]) * cross, starts) / (6 * area)
    elen = np.hypot(*(w - v).T)
    shortest = np.minimum.reduceat(elen, starts)
    sizes = np.diff(ptr)
    diam = np.zeros(mesh.n_cells)
    for m in np.unique(sizes):
        sel = np.nonzero(sizes == m)[0]
        pts = mesh.vertices[flat[ptr[sel][:, None] + np.arange(m)]]
        d = pts[:, :, None, :] - pts[:, None, :, :]
        diam[sel] = np.sqrt((d**2).sum(-1)).max(axis=(1, 2))
    cell_of = np.repeat(np.arange(mesh.n_cells), sizes)
    c = np.stack([cx, cy], axis=1)[cell_of]
    # signed distance from centroid to each edge line (positive inside)
    dist = ((w - v)[:, 0] * (c - v)[:, 1] - (w - v)[:, 1] * (c - v)[:, 0]) / elen
    disk = np.minimum.reduceat(dist, starts)
    return {
        "area": area,
        "diameter": diam,
        "shortest_edge": shortest,
        "edge_ratio": shortest / diam,
        "disk_ratio": disk / diam,
        "centroid": np.stack([cx, cy], axis=1),
    }


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def validate(mesh: Mesh, c_tau: float | None = DEFAULT_C_TAU) -> None:
    """Raise :class:`MeshError` unless all mesh invariants hold."""
    q = quality_report(mesh)
    if np.any(q["area"] <= 0):
        raise MeshError("cell with non-positive (clockwise) orientation")
    ptr, flat = mesh.cell_ptr, mesh.cell_verts
    sizes = np.diff(ptr)
    for m in np.unique(sizes):
        if m < 4:
            continue
        sel = np.nonzero(sizes == m)[0]
        pts = mesh.vertices[flat[ptr[sel][:, None] + np.arange(m)]]
        for i in range(m):
            for j in range(i + 2, m):
                if i == 0 and j == m - 1:
                    continue
                if np.any(
                    _segments_cross(pts[:, i], pts[:, (i + 1) % m], pts[:, j], pts[:, (j + 1) % m])
                ):
                    raise MeshError("self-intersecting cell")
    if np.any(q["disk_ratio"] <= 0):
        raise MeshError("cell not star-shaped with respect to its centroid")
    total = q["area"].sum()
    if abs(total - mesh.domain.area) > 1e-12 * mesh.domain.area:
        raise MeshError(f"cell areas sum to {total!r}, domain area is {mesh.domain.area!r}")
    bnd = mesh.boundary_edges
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    on_b = mesh.domain.on_boundary(mid)
    if np.any(bnd & ~on_b):
        raise MeshError("edge with a single adjacent cell lies inside the domain")
    if np.any(~bnd & on_b):
        raise MeshError("edge shared by two cells lies on the domain boundary")
    if c_tau is not None:
        if q["edge_ratio"].min() < c_tau:
            raise MeshError(
                f"shortest-edge/diameter ratio {q['edge_ratio'].min():.3g} below C_tau={c_tau}"
            )
        if q["disk_ratio"].min() < c_tau:
            raise MeshError(f"disk/diameter ratio {q['disk_ratio'].min():.3g} below C_tau={c_tau}")


# ---------------------------------------------------------------------------
# structured families


DIAGONALS = ("up", "down")


def grid_cells(nx: int, ny: int, split: bool = False, keep=None, diagonal: str = "up"):
    """Counterclockwise cells of an (nx+1) x (ny+1) vertex grid, row-major vertex ids.

    ``split`` cuts each square along a diagonal: ``up`` runs from lower-left to
    upper-right, ``down`` from upper-left to lower-right.
    ``keep(i, j)`` selects which squares (lower-left index) are kept.
    """
    if diagonal not in DIAGONALS:
        raise MeshError(f"diagonal must be one of {DIAGONALS}")
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    if keep is not None:
        mask = keep(i, j)
        i, j = i[mask], j[mask]
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    if split and diagonal == "down":
        lower = np.stack([v00, v10, v01], axis=1)
        upper = np.stack([v10, v11, v01], axis=1)
        return np.stack([lower, upper], axis=1).reshape(-1, 3)
    if split:
        lower = np.stack([v00, v10, v11], axis=1)
        upper = np.stack([v00, v11, v01], axis=1)
        return np.stack([lower, upper], axis=1).reshape(-1, 3)
    return np.stack([v00, v10, v11, v01], axis=1)


def _compact(vertices: np.ndarray, cells: np.ndarray):
    used = np.unique(cells)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[cells]


def _cells_tuple(cells: np.ndarray):
    n, m = cells.shape
    return np.arange(0, n * m + 1, m, dtype=np.int64), cells.ravel().astype(np.int64)


def structured_mesh(
    domain: Domain,
    n: int,
    kind: str = "square",
    shift: float = 0.25,
    c_tau: float | None = DEFAULT_C_TAU,
    level: int = 0,
    diagonal: str | None = None,
) -> Mesh:
    """Uniform grid with ``n`` cells per unit of reference length.

    On the rectangle, ``n`` is the number of cells along each side; on the
    L-shape, each of the three unit squares gets ``n`` x ``n`` cells.
    ``kind`` is ``square``, ``triangular`` or ``trapezoidal``.  Triangles use
    the ``up`` diagonal on the rectangle and ``down`` on the L-shape unless
    ``diagonal`` says otherwise; on the rectangle the two are mirror images.
    """
    if diagonal is None:
        diagonal = "down" if isinstance(domain, LShape) else "up"
    split = kind == "triangular"
    if isinstance(domain, Rectangle):
        nx = ny = n
        xs = np.linspace(0.0, domain.a, nx + 1)
        ys = np.linspace(0.0, domain.b, ny + 1)
        keep = None
    elif isinstance(domain, LShape):
        if kind == "trapezoidal":
            raise MeshError("trapezoidal family is not defined on the L-shape")
        nx = ny = 2 * n
        xs = np.linspace(-1.0, 1.0, nx + 1)
        ys = np.linspace(-1.0, 1.0, ny + 1)
        xs[n] = ys[n] = 0.0

        def keep(i, j):
            return ~((i >= n) & (j < n))

    else:
        raise MeshError(f"unsupported domain {domain!r}")
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    if kind == "trapezoidal":
        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
        interior = (J > 0) & (J < ny)
        Y = Y + np.where(interior, (-1.0) ** (I + J) * shift * (domain.b / ny), 0.0)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    cells = grid_cells(nx, ny, split=split, keep=keep, diagonal=diagonal)
    vertices, cells = _compact(vertices, cells)
    return build_mesh(vertices, _cells_tuple(cells), domain, kind, level, c_tau)


# ---------------------------------------------------------------------------
# Voronoi-type families


def _clip_convex(poly: np.ndarray, bbox) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to an axis-aligned box."""
    x0, y0, x1, y1 = bbox
    planes = ((0, x0, 1.0), (0, x1, -1.0), (1, y0, 1.0), (1, y1, -1.0))
    out = poly
    for axis, val, sgn in planes:
        if len(out) == 0:
            break
        inp, out = out, []
        for i in range(len(inp)):
            p, q = inp[i], inp[(i + 1) % len(inp)]
            dp, dq = sgn * (p[axis] - val), sgn * (q[axis] - val)
            if dp >= 0:
                out.append(p)
            if dp * dq < 0:
                t = dp / (dp - dq)
                r = p + t * (q - p)
                r[axis] = val
                out.append(r)
        out = np.array(out)
    return out


def clipped_voronoi_cells(seeds: np.ndarray, domain: Rectangle) -> list[np.ndarray]:
    """Voronoi cells of ``seeds`` intersected with the rectangle (coordinate lists)."""
    x0, y0, x1, y1 = domain.bbox
    span = max(x1 - x0, y1 - y0)
    ring = np.array(
        [[x0 - 3 * span, y0 - 3 * span], [x1 + 3 * span, y0 - 3 * span],
         [x1 + 3 * span, y1 + 3 * span], [x0 - 3 * span, y1 + 3 * span]]
    )
    vor = Voronoi(np.vstack([seeds, ring]))
    polys = []
    for i in range(len(seeds)):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or len(reg) < 3:
            raise MeshError("unbounded Voronoi region for an interior seed")
        poly = vor.vertices[reg]
        c = poly.mean(axis=0)
        ang = np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0])
        poly = _clip_convex(poly[np.argsort(ang)], domain.bbox)
        polys.append(poly)
    return polys


def _polygon_centroids(polys) -> np.ndarray:
    from .polyquad import polygon_area_centroid

    return np.array([polygon_area_centroid(p)[1] for p in polys])


def _merge_polygons(polys, tol: float):
    """Shared vertex numbering for independently computed polygons."""
    pts = np.vstack(polys)
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(pts))])
    uniq, idx = np.unique(roots, return_inverse=True)
    vertices = pts[uniq]
    cells, start = [], 0
    for p in polys:
        ids = idx[start : start + len(p)]
        start += len(p)
        keep = np.ones(len(ids), dtype=bool)
        keep[1:] = ids[1:] != ids[:-1]
        if ids[-1] == ids[0] and len(ids) > 1:
            keep[-1] = False
        cells.append(ids[keep])
    return vertices, cells


def _snap_to_box(vertices: np.ndarray, bbox, tol: float) -> np.ndarray:
    v = vertices.copy()
    x0, y0, x1, y1 = bbox
    for axis, val in ((0, x0), (0, x1), (1, y0), (1, y1)):
        close = np.abs(v[:, axis] - val) < tol
        v[close, axis] = val
    return v


def _collapse_short_edges(vertices, cells, domain: Rectangle, ratio: float):
    """Merge endpoints of edges shorter than ``ratio`` times the smaller adjacent cell diameter.

    Works in passes; each pass collapses a vertex-disjoint set of the shortest
    candidate edges.  Boundary vertices stay on the boundary; corners never move.
    """
    vertices = vertices.copy()
    x0, y0, x1, y1 = domain.bbox
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    for _ in range(100):
        ptr = np.concatenate([[0], np.cumsum([len(c) for c in cells])])
        flat = np.concatenate(cells)
        nxt = flat[_next_index(ptr)]
        length = np.hypot(*(vertices[flat] - vertices[nxt]).T)
        diam = np.array([_diam(vertices[c]) for c in cells])
        rel = length / np.repeat(diam, np.diff(ptr))
        cand = np.nonzero(rel < ratio)[0]
        if len(cand) == 0:
            break
        touched = np.zeros(len(vertices), dtype=bool)
        mapping = np.arange(len(vertices))
        for i in cand[np.argsort(rel[cand], kind="stable")]:
            a, b = flat[i], nxt[i]
            if touched[a] or touched[b]:
                continue
            touched[a] = touched[b] = True
            pa, pb = vertices[a], vertices[b]
            fix = []
            for p in (pa, pb):
                fix.append((abs(p[0] - x0) < tol or abs(p[0] - x1) < tol,
                            abs(p[1] - y0) < tol or abs(p[1] - y1) < tol))
            target = 0.5 * (pa + pb)
            for axis in (0, 1):
                if fix[0][axis]:
                    target[axis] = pa[axis]
                elif fix[1][axis]:
                    target[axis] = pb[axis]
            if (fix[0][0] and fix[1][0] and pa[0] != pb[0]) or (
                fix[0][1] and fix[1][1] and pa[1] != pb[1]
            ):
                raise MeshError("cannot collapse an edge joining two different sides")
            keep, drop = min(a, b), max(a, b)
            vertices[keep] = target
            mapping[drop] = keep
        new_cells = []
        for c in cells:
            c = mapping[c]
            m = np.ones(len(c), dtype=bool)
            m[1:] = c[1:] != c[:-1]
            if len(c) > 1 and c[-1] == c[0]:
                m[-1] = False
            c = c[m]
            if len(c) < 3:
                raise MeshError("edge collapse degenerated a cell")
            new_cells.append(c)
        cells = new_cells
    return _compact_list(vertices, cells)


def _diam(p):
    d = p[:, None, :] - p[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _drop_collinear(vertices, cells, tol: float = 1e-12):
    """Remove vertices where a cell boundary is straight and no other cell uses the vertex."""
    counts = np.bincount(np.concatenate(cells), minlength=len(vertices))
    out = []
    for c in cells:
        p = vertices[c]
        prev = np.roll(p, 1, axis=0)
        nxt = np.roll(p, -1, axis=0)
        cross = (p[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1]) - (p[:, 1] - prev[:, 1]) * (
            nxt[:, 0] - prev[:, 0]
        )
        scale = np.hypot(*(nxt - prev).T) ** 2
        straight = (np.abs(cross) <= tol * scale) & (counts[c] == 1)
        out.append(c[~straight])
    return _compact_list(vertices, out)


def _compact_list(vertices, cells):
    used = np.unique(np.concatenate(cells))
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], [remap[c] for c in cells]


def _polygons_to_mesh(polys, domain, family, level, c_tau, collapse_ratio=None):
    x0, y0, x1, y1 = domain.bbox
    scale = max(x1 - x0, y1 - y0)
    vertices, cells = _merge_polygons(polys, 1e-10 * scale)
    vertices = _snap_to_box(vertices, domain.bbox, 1e-10 * scale)
    if collapse_ratio:
        vertices, cells = _collapse_short_edges(vertices, cells, domain, collapse_ratio)
    vertices, cells = _drop_collinear(vertices, cells)
    return build_mesh(vertices, cells, domain, family, level, c_tau)


def voronoi_mesh(
    domain: Rectangle,
    n_cells: int,
    seed: int = 0,
    lloyd_iterations: int = 3,
    collapse_ratio: float | None = 0.1,
    c_tau: float | None = DEFAULT_C_TAU,
    level: int = 0,
) -> Mesh:
    """Lloyd-relaxed clipped Voronoi mesh of ``n_cells`` uniform random seeds."""
    if not isinstance(domain, Rectangle):
        raise MeshError("Voronoi family is only defined on the rectangle")
    rng = np.random.default_rng(seed)
    seeds = rng.uniform((0.0, 0.0), (domain.a, domain.b), size=(n_cells, 2))
    for _ in range(lloyd_iterations):
        seeds = _polygon_centroids(clipped_voronoi_cells(seeds, domain))
    polys = clipped_voronoi_cells(seeds, domain)
    return _polygons_to_mesh(polys, domain, "voronoi", level, c_tau, collapse_ratio)


def hexagon_seeds(domain: Rectangle, n: int) -> np.ndarray:
    """Centres of a row-staggered lattice: 8n+1 rows alternating 6n+1 and 6n cells.

    Even rows have centres on both vertical sides (clipped to half cells),
    the first and last rows lie on the horizontal sides.
    """
    rows = 8 * n
    w = domain.a / (6 * n)
    pts = []
    for j in range(rows + 1):
        y = domain.b * j / rows
        if j % 2 == 0:
            xs = w * np.arange(6 * n + 1)
            xs[-1] = domain.a
        else:
            xs = w * (np.arange(6 * n) + 0.5)
        pts.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    return np.vstack(pts)


def hexagonal_mesh(domain: Rectangle, level: int, c_tau: float | None = DEFAULT_C_TAU) -> Mesh:
    """Hexagonal tiling clipped to the rectangle; 48*4^l + 10*2^l + 1 cells."""
    if not isinstance(domain, Rectangle):
        raise MeshError("hexagonal family is only defined on the rectangle")
    seeds = hexagon_seeds(domain, 2**level)
    polys = clipped_voronoi_cells(seeds, domain)
    return _polygons_to_mesh(polys, domain, "hexagonal", level, c_tau)


# ---------------------------------------------------------------------------


def cells_per_side(level: int) -> int:
    """Grid resolution of the structured rectangle families at ``level``."""
    return 4 * 2**level


def generate(
    family: str,
    level: int,
    domain: Domain | None = None,
    *,
    seed: int = 0,
    shift: float = 0.25,
    lloyd_iterations: int = 3,
    c_tau: float | None = DEFAULT_C_TAU,
) -> Mesh:
    """Mesh of the given family at refinement ``level``.

    Rectangle: structured families use a 4*2^l x 4*2^l grid (64 squares or
    128 triangles at level 1), Voronoi uses 32*4^l seeds.  L-shape: each unit
    square is split into 2^(l+1) x 2^(l+1) squares.
    """
    domain = Rectangle() if domain is None else domain
    if level < 0:
        raise MeshError("level must be >= 0")
    if family not in FAMILIES:
        raise MeshError(f"unknown mesh family {family!r}")
    if isinstance(domain, LShape):
        if family not in ("triangular", "square"):
            raise MeshError(f"family {family!r} is not supported on the L-shape")
        return structured_mesh(domain, 2 ** (level + 1), family, c_tau=c_tau, level=level)
    if family in ("triangular", "square", "trapezoidal"):
        return structured_mesh(domain, cells_per_side(level), family, shift, c_tau, level)
    if family == "voronoi":
        return voronoi_mesh(domain, 32 * 4**level, seed, lloyd_iterations, c_tau=c_tau, level=level)
    return hexagonal_mesh(domain, level, c_tau)


# ---------------------------------------------------------------------------
# text format: "nv nc", nv lines "x y", nc lines "m i1 ... im"


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    for c in range(mesh.n_cells):
        ids = mesh.cell(c)
        lines.append(" ".join([str(len(ids))] + [str(i) for i in ids]))
    from .io import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def load_mesh(path, domain: Domain | None = None, c_tau: float | None = DEFAULT_C_TAU) -> Mesh:
    tokens = Path(path).read_text().split()
    try:
        nv, nc = int(tokens[0]), int(tokens[1])
        pos = 2
        xy = np.array(tokens[pos : pos + 2 * nv], dtype=float).reshape(nv, 2)
        pos += 2 * nv
        cells = []
        for _ in range(nc):
            m = int(tokens[pos])
            cells.append(np.array(tokens[pos + 1 : pos + 1 + m], dtype=np.int64))
            pos += 1 + m
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}") from exc
    if pos != len(tokens):
        raise MeshError(f"trailing data in mesh file {path}")
    if any(c.min() < 0 or c.max() >= nv for c in cells):
        raise MeshError("vertex index out of range")
    if domain is None:
        domain = _infer_domain(xy)
    return build_mesh(xy, cells, domain, "file", 0, c_tau)


def _infer_domain(xy: np.ndarray) -> Domain:
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    if np.allclose(lo, (-1, -1)) and np.allclose(hi, (1, 1)):
        return LShape()
    if not np.allclose(lo, (0, 0)):
        raise MeshError("cannot infer domain: rectangle meshes must start at the origin")
    return Rectangle(float(hi[0]), float(hi[1]))
