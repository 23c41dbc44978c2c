"""Polygonal meshes: topology, geometry, generators and a plain-text format.

A :class:`Mesh` is built once by :func:`build_topology` and treated as
immutable afterwards.  Every edge is stored with the orientation in which
its lower-indexed neighbour ``K-`` traverses it counter-clockwise, so the
right-hand normal of the stored direction points from ``K-`` into ``K+``
(outwards on the boundary).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import Voronoi, cKDTree

__all__ = [
    "Mesh",
    "MeshError",
    "MeshQualityReport",
    "build_topology",
    "generate_rectangle_grid",
    "generate_distorted_grid",
    "generate_cvt_polygonal",
    "unit_square",
    "l_shape",
    "load_mesh",
    "save_mesh",
    "mesh_quality",
    "point_in_polygon",
]


class MeshError(ValueError):
    """Raised for invalid mesh input or a failed mesh construction."""


def unit_square():
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def l_shape():
    """(0,1)^2 with the closed square [1/2,1]x[1/2,1] removed, CCW."""
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5],
                     [0.5, 1.0], [0.0, 1.0]])


def signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_polygon(points, poly):
    """Even-odd rule; points on the boundary may go either way."""
    points = np.atleast_2d(points)
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossings = np.sum(straddle & (x < xcross), axis=1)
    return crossings % 2 == 1


def _segments_cross(p, q, r, s):
    # proper intersection of segments pq and rs (shared endpoints excluded)
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(r, s, p), orient(r, s, q)
    d3, d4 = orient(p, q, r), orient(p, q, s)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(poly):
    m = len(poly)
    if m < 3:
        return False
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(poly[i], poly[(i + 1) % m], poly[j], poly[(j + 1) % m]):
                return False
    return True


def _ear_clip(poly):
    """Triangulate a simple CCW polygon; returns local index triples."""
    m = len(poly)
    if m == 3:
        return [(0, 1, 2)]
    idx = list(range(m))
    tris = []

    def cross(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def inside(p, a, b, c):
        return cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * m * m:
            raise MeshError("triangulation failed; polygon is not simple")
        n = len(idx)
        best, best_quality = None, -np.inf
        for t in range(n):
            i0, i1, i2 = idx[t - 1], idx[t], idx[(t + 1) % n]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 0:
                continue
            if any(inside(poly[j], a, b, c) for j in idx if j not in (i0, i1, i2)):
                continue
            # prefer well-shaped ears: smallest angle of the candidate triangle
            quality = _min_angle(np.array([a, b, c]))
            if quality > best_quality:
                best, best_quality = t, quality
        if best is None:
            # only collinear or touching ears remain; cut the flattest one
            best = max(range(n), key=lambda t: cross(poly[idx[t - 1]], poly[idx[t]],
                                                     poly[idx[(t + 1) % n]]))
        tris.append((idx[best - 1], idx[best], idx[(best + 1) % n]))
        idx.pop(best)
    tris.append(tuple(idx))
    return tris


def _min_angle(tri):
    angles = []
    for i in range(3):
        u = tri[(i + 1) % 3] - tri[i]
        v = tri[(i + 2) % 3] - tri[i]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            return 0.0
        c = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(c)))
    return min(angles)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polygonal mesh with edge topology and per-cell geometry.

    Attributes
    ----------
    vertices : (NV, 2) float array
    cells : list of int arrays, CCW vertex loops
    edges : (NE, 2) int array, oriented CCW for ``edge_cells[:, 0]``
    edge_cells : (NE, 2) int array; column 1 is -1 on boundary edges
    cell_edges : list of int arrays; ``cell_edges[c][i]`` joins local
        vertices ``i`` and ``i+1`` of cell ``c``
    cell_edge_sign : list of arrays of +1/-1, +1 when the cell traverses
        the edge in its stored direction
    """

    vertices: np.ndarray
    cells: list
    edges: np.ndarray
    edge_cells: np.ndarray
    cell_edges: list
    cell_edge_sign: list
    areas: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    triangles: list = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary_edges(self):
        return self.edge_cells[:, 1] < 0

    @property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    @property
    def h(self):
        return float(self.diameters.max())

    def cell_polygon(self, c):
        return self.vertices[self.cells[c]]

    def edge_length(self, e):
        a, b = self.vertices[self.edges[e]]
        return float(np.hypot(*(b - a)))

    def edge_normal(self, e):
        """Unit normal pointing from ``K-`` to ``K+`` (outward on boundary)."""
        a, b = self.vertices[self.edges[e]]
        t = (b - a) / np.hypot(*(b - a))
        return np.array([t[1], -t[0]])

    def edge_tangent(self, e):
        a, b = self.vertices[self.edges[e]]
        return (b - a) / np.hypot(*(b - a))

    def same_as(self, other):
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
        )


def build_topology(vertices, cells):
    """Validate raw input and assemble edges, orientation and geometry."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (NV, 2) array")
    nv = len(vertices)
    cells = [np.asarray(c, dtype=np.int64) for c in cells]
    if not cells:
        raise MeshError("mesh has no cells")

    areas = np.empty(len(cells))
    centroids = np.empty((len(cells), 2))
    diameters = np.empty(len(cells))
    triangles = []
    for c, loop in enumerate(cells):
        if len(loop) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if loop.min() < 0 or loop.max() >= nv:
            raise IndexError(f"cell {c} references a vertex outside 0..{nv - 1}")
        if len(set(loop.tolist())) != len(loop):
            raise MeshError(f"cell {c} repeats a vertex")
        poly = vertices[loop]
        a = signed_area(poly)
        if a <= 0:
            raise MeshError(f"cell {c} is not counter-clockwise (signed area {a:.3e})")
        if not _is_simple(poly):
            raise MeshError(f"cell {c} is self-intersecting")
        tris = _ear_clip(poly)
        tri_pts = poly[np.array(tris)]
        d1 = tri_pts[:, 1] - tri_pts[:, 0]
        d2 = tri_pts[:, 2] - tri_pts[:, 0]
        ta = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        areas[c] = ta.sum()
        centroids[c] = (ta[:, None] * tri_pts.mean(axis=1)).sum(axis=0) / ta.sum()
        diff = poly[:, None, :] - poly[None, :, :]
        diameters[c] = np.sqrt((diff ** 2).sum(-1)).max()
        triangles.append(loop[np.array(tris)])

    edge_index = {}
    edges, edge_cells = [], []
    cell_edges, cell_edge_sign = [], []
    for c, loop in enumerate(cells):
        ids = np.empty(len(loop), dtype=np.int64)
        sgn = np.empty(len(loop), dtype=np.int64)
        for i in range(len(loop)):
            a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
            key = (min(a, b), max(a, b))
            if key not in edge_index:
                edge_index[key] = len(edges)
                edges.append([a, b])
                edge_cells.append([c, -1])
                ids[i], sgn[i] = edge_index[key], 1
            else:
                e = edge_index[key]
                if edge_cells[e][1] >= 0:
                    raise MeshError(f"edge {key} is shared by more than two cells")
                if edges[e] != [b, a]:
                    raise MeshError(f"edge {key} has inconsistent orientation")
                edge_cells[e][1] = c
                ids[i], sgn[i] = e, -1
        cell_edges.append(ids)
        cell_edge_sign.append(sgn)

    # cells are visited in increasing order, so column 0 already holds K-
    # and the stored direction is the one K- uses.
    used = np.zeros(nv, dtype=bool)
    for loop in cells:
        used[loop] = True
    if not used.all():
        raise MeshError(f"{(~used).sum()} vertices are not used by any cell")

    return Mesh(
        vertices=vertices,
        cells=cells,
        edges=np.array(edges, dtype=np.int64),
        edge_cells=np.array(edge_cells, dtype=np.int64),
        cell_edges=cell_edges,
        cell_edge_sign=cell_edge_sign,
        areas=areas,
        centroids=centroids,
        diameters=diameters,
        triangles=triangles,
    )


def generate_rectangle_grid(nx, ny, domain=((0.0, 1.0), (0.0, 1.0))):
    """Uniform ``nx`` by ``ny`` grid of quadrilaterals on a rectangle."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive integers")
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate rectangle")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v = j * (nx + 1) + i
            cells.append([v, v + 1, v + nx + 2, v + nx + 1])
    return build_topology(vertices, cells)


def generate_distorted_grid(nx, ny, delta=0.1):
    """Unit-square grid with interior vertices moved by a smooth sine map.

    ``(x, y) -> (x + s, y + s)`` with ``s = delta sin(2 pi x) sin(2 pi y)``.
    """
    if nx < 2 or ny < 2:
        raise MeshError("distorted grid needs nx, ny >= 2")
    if not 0 <= delta < 0.25:
        raise MeshError("delta must lie in [0, 0.25)")
    base = generate_rectangle_grid(nx, ny)
    v = base.vertices.copy()
    interior = ~base.boundary_vertices
    s = delta * np.sin(2 * np.pi * v[:, 0]) * np.sin(2 * np.pi * v[:, 1])
    v[interior, 0] += s[interior]
    v[interior, 1] += s[interior]
    try:
        return build_topology(v, base.cells)
    except MeshError as exc:
        raise MeshError(f"delta={delta} inverts a cell: {exc}") from exc


def _voronoi_regions(seeds, domain_poly, domain_geom):
    import shapely

    lo, hi = domain_poly.min(axis=0), domain_poly.max(axis=0)
    center, span = 0.5 * (lo + hi), float(np.max(hi - lo))
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    ghosts = center + 10 * span * np.column_stack([np.cos(ang), np.sin(ang)])
    vor = Voronoi(np.vstack([seeds, ghosts]))
    polys = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError("unbounded Voronoi region for an interior seed")
        polys.append(shapely.Polygon(vor.vertices[region]))
    return shapely.intersection(np.array(polys, dtype=object), domain_geom)


def generate_cvt_polygonal(n_cells, domain=None, rng_seed=0, lloyd_iters=200):
    """Centroidal Voronoi mesh by Lloyd iteration, clipped to ``domain``.

    ``domain`` is a CCW polygon (unit square by default).  Seeds are drawn
    uniformly with ``numpy.random.default_rng(rng_seed)``; each Lloyd step
    replaces every seed with the centroid of its clipped cell.
    """
    import shapely

    if n_cells < 2:
        raise MeshError("n_cells must be at least 2")
    domain_poly = unit_square() if domain is None else np.asarray(domain, dtype=float)
    if signed_area(domain_poly) <= 0:
        raise MeshError("domain polygon must be counter-clockwise")
    domain_geom = shapely.Polygon(domain_poly)
    rng = np.random.default_rng(rng_seed)
    lo, hi = domain_poly.min(axis=0), domain_poly.max(axis=0)
    seeds = np.empty((0, 2))
    while len(seeds) < n_cells:
        cand = lo + (hi - lo) * rng.random((2 * n_cells, 2))
        cand = cand[point_in_polygon(cand, domain_poly)]
        seeds = np.vstack([seeds, cand])[:n_cells]

    for _ in range(lloyd_iters):
        regions = _voronoi_regions(seeds, domain_poly, domain_geom)
        seeds = shapely.get_coordinates(shapely.centroid(regions))

    regions = _voronoi_regions(seeds, domain_poly, domain_geom)
    return _mesh_from_regions(regions, domain_poly)


def _mesh_from_regions(regions, domain_poly):
    import shapely

    loops = []
    scale = float(np.max(domain_poly.max(axis=0) - domain_poly.min(axis=0)))
    for c, reg in enumerate(regions):
        if reg.geom_type != "Polygon" or reg.is_empty:
            raise MeshError(f"Voronoi cell {c} is not a single polygon after clipping")
        ring = np.asarray(reg.exterior.coords)[:-1]
        if signed_area(ring) < 0:
            ring = ring[::-1]
        loops.append(ring)

    pts = np.vstack(loops)
    tol = 1e-10 * scale
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, label = connected_components(graph, directed=False)
    # deterministic representative: first occurrence of each label
    uniq, first = np.unique(label, return_index=True)
    order = np.argsort(first)
    new_id = np.empty(len(uniq), dtype=np.int64)
    new_id[order] = np.arange(len(uniq))
    vertices = pts[first[order]]
    cells, offset = [], 0
    for ring in loops:
        ids = new_id[label[offset:offset + len(ring)]]
        offset += len(ring)
        keep = [int(i) for j, i in enumerate(ids) if i != ids[j - 1]]
        if len(keep) < 3:
            raise MeshError("Lloyd produced a degenerate cell")
        cells.append(keep)
    _insert_hanging_vertices(vertices, cells)
    return build_topology(vertices, cells)


def _insert_hanging_vertices(vertices, cells):
    """Split cell edges that pass through another cell's vertex.

    Clipping creates such T-junctions only where a domain corner or a
    Voronoi vertex lands on a neighbour's edge; splitting restores a
    conforming mesh without moving any point.
    """
    scale = float(np.ptp(vertices, axis=0).max())
    tree = cKDTree(vertices)
    for c, loop in enumerate(cells):
        out = []
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            out.append(a)
            pa, pb = vertices[a], vertices[b]
            L = np.hypot(*(pb - pa))
            cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * L + 1e-12)
            hits = []
            for v in cand:
                if v in (a, b):
                    continue
                d = vertices[v] - pa
                s = np.dot(d, pb - pa) / L ** 2
                dist = abs(d[0] * (pb - pa)[1] - d[1] * (pb - pa)[0]) / L
                if 0 < s < 1 and dist < 1e-10 * scale:
                    hits.append((s, v))
            out.extend(v for _, v in sorted(hits))
        cells[c] = out


@dataclass(frozen=True)
class MeshQualityReport:
    min_angle: float
    max_edge_ratio: np.ndarray
    violating_cells: list


def mesh_quality(mesh, min_angle=10.0, max_ratio=50.0):
    """Shape diagnostics of the triangulated cells; nothing is enforced."""
    worst = np.inf
    ratios = np.empty(mesh.n_cells)
    bad = []
    for c in range(mesh.n_cells):
        tri_angles = [_min_angle(mesh.vertices[t]) for t in mesh.triangles[c]]
        cell_min = min(tri_angles)
        worst = min(worst, cell_min)
        lengths = [mesh.edge_length(e) for e in mesh.cell_edges[c]]
        ratios[c] = max(lengths) / min(lengths)
        if cell_min < min_angle or ratios[c] > max_ratio:
            bad.append(c)
    return MeshQualityReport(min_angle=float(worst), max_edge_ratio=ratios, violating_cells=bad)


def save_mesh(mesh, path):
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in [len(c), *c.tolist()]) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    tokens = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    try:
        nv, nc = (int(t) for t in tokens[0])
        vertices = np.array([[float(a), float(b)] for a, b in tokens[1:1 + nv]])
        cells = []
        for row in tokens[1 + nv:1 + nv + nc]:
            m = int(row[0])
            if len(row) != m + 1:
                raise MeshError(f"cell line declares {m} vertices but lists {len(row) - 1}")
            cells.append([int(t) for t in row[1:]])
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(vertices) != nv or len(cells) != nc or len(tokens) != 1 + nv + nc:
        raise MeshError(f"malformed mesh file {path}: counts do not match header")
    return build_topology(vertices.reshape(-1, 2), cells)
