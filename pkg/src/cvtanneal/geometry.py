"""Convex polygon domains, clipped Voronoi tessellations and exact polygon moments.

Cells are built by clipping the domain against one bisector half-plane per
neighbouring generator. Every edge of a clipped cell carries a label telling
where it came from: ``j >= 0`` for the bisector with generator ``j`` and
``-1 - k`` for edge ``k`` of the domain boundary. Adjacency is read off these
labels, so no floating-point segment matching is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoincidentGenerators,
    Degenerate,
    DegenerateCell,
    EmptyCell,
    NonConvex,
    PointOutsideDomain,
    TooFewVertices,
)

COINCIDENCE_TOL = 1e-12
# Shared edges shorter than this (relative to the domain diameter) are treated
# as point contacts, e.g. diagonal neighbours meeting at a 4-fold vertex.
EDGE_LENGTH_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def polygon_area_centroid(poly):
    """Signed area and centroid of a simple polygon given as an (m, 2) array."""
    poly = np.asarray(poly, dtype=float)
    origin = poly[0]
    v = poly - origin
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, origin + np.array([cx, cy])


def second_moment(cell, p):
    """Exact polar second moment ``int_cell |p - y|^2 dy`` of a convex polygon.

    The polygon is fanned about ``p`` and the closed-form moments of each
    triangle are summed; this is valid whether or not ``p`` lies inside.
    """
    cell = np.asarray(cell, dtype=float)
    area, _ = polygon_area_centroid(cell)
    if abs(area) < 1e-14:
        raise DegenerateCell(f"cell area {area!r} below 1e-14")
    v = cell - np.asarray(p, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    ixx = (cross * (x * x + x * xn + xn * xn)).sum() / 12.0
    iyy = (cross * (y * y + y * yn + yn * yn)).sum() / 12.0
    return abs(ixx + iyy)


@dataclass(frozen=True, eq=False)
class Domain:
    """A strictly convex polygon with counterclockwise vertices.

    Use :func:`build_domain` to construct one; it validates convexity and
    normalises orientation.
    """

    vertices: np.ndarray
    perimeter: float
    area: float
    centroid: np.ndarray
    diameter: float
    # outward unit normals and offsets: x is inside iff normals @ x < offsets
    normals: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def edge_lengths(self):
        return np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)

    def sigma(self, n_charges):
        """Uniform boundary charge density that neutralises ``n_charges`` unit charges."""
        return n_charges / self.perimeter

    def signed_distances(self, points):
        """Distance of each point to each edge line, positive inside. Shape (n, m)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.offsets[None, :] - points @ self.normals.T

    def contains(self, points):
        """Strict interior test; returns a boolean array (scalar for one point)."""
        pts = np.asarray(points, dtype=float)
        inside = (self.signed_distances(pts) > 0.0).all(axis=1)
        return bool(inside[0]) if pts.ndim == 1 else inside

    def __eq__(self, other):
        return isinstance(other, Domain) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())


def build_domain(vertices):
    """Validate a convex polygon and return it as a counterclockwise :class:`Domain`."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise Degenerate(f"expected (m, 2) vertex array, got shape {v.shape}")
    if len(v) < 3:
        raise TooFewVertices(f"need at least 3 vertices, got {len(v)}")
    if not np.all(np.isfinite(v)):
        raise Degenerate("non-finite vertex coordinates")
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]))
    if scale == 0.0 or np.any(lengths <= 1e-12 * scale):
        raise Degenerate("duplicate vertices")
    area, _ = polygon_area_centroid(v)
    if area < 0:
        v = v[::-1].copy()
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        area = -area
    if area <= 1e-12 * scale * scale:
        raise Degenerate("polygon has zero area")
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    # sin of the turning angle at each vertex
    sin_turn = cross / (lengths * np.roll(lengths, -1))
    if np.any(np.abs(sin_turn) <= 1e-12):
        raise Degenerate("collinear consecutive vertices")
    if np.any(sin_turn < 0):
        raise NonConvex("reflex vertex found")
    turning = np.arctan2(cross, (edges * nxt).sum(axis=1)).sum()
    if abs(turning - 2 * np.pi) > 1e-9:
        raise NonConvex("polygon winds more than once")

    area, centroid = polygon_area_centroid(v)
    normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
    offsets = (normals * v).sum(axis=1)
    diffs = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(axis=2)).max())
    return Domain(
        vertices=_frozen(v),
        perimeter=float(lengths.sum()),
        area=float(area),
        centroid=_frozen(centroid),
        diameter=diameter,
        normals=_frozen(normals),
        offsets=_frozen(offsets),
    )


def unit_square():
    return build_domain([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def regular_polygon(k=64, radius=1.0, center=(0.0, 0.0)):
    """Regular k-gon inscribed in a circle; also stands in for a disk."""
    if k < 3:
        raise TooFewVertices(f"need at least 3 vertices, got {k}")
    theta = 2.0 * np.pi * np.arange(k) / k
    pts = np.column_stack([np.cos(theta), np.sin(theta)]) * radius + np.asarray(center, float)
    return build_domain(pts)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Ordered generator positions, shape (N, 2)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def min_separation(self):
        n = len(self.points)
        if n < 2:
            return np.inf
        d = self.points[:, None, :] - self.points[None, :, :]
        r = np.sqrt((d**2).sum(axis=2))
        return float(r[np.triu_indices(n, 1)].min())


def check_configuration(domain, config):
    """Raise if any generator is outside the domain or two generators coincide."""
    pts = config.points
    if len(pts) and not np.all(domain.contains(pts)):
        bad = np.flatnonzero(~domain.contains(pts))
        raise PointOutsideDomain(f"generators {bad.tolist()} are not strictly inside the domain")
    if config.min_separation() <= COINCIDENCE_TOL:
        raise CoincidentGenerators("two generators coincide")


@dataclass(frozen=True, eq=False)
class Tessellation:
    cells: list
    labels: list
    areas: np.ndarray
    centroids: np.ndarray
    edges: list  # (i, j, length) with i < j

    def __len__(self):
        return len(self.cells)

    def neighbors(self, i):
        return sorted({j for a, b, _ in self.edges for j in (a, b) if i in (a, b) and j != i})


def _clip(poly, labels, normal, offset, label):
    """Keep the part of a convex polygon where ``normal @ x <= offset``."""
    s = poly @ normal - offset
    inside = s <= 0.0
    if inside.all():
        return poly, labels
    if not inside.any():
        return poly[:0], labels[:0]
    out_pts, out_lab = [], []
    m = len(poly)
    for k in range(m):
        kn = (k + 1) % m
        a_in, b_in = inside[k], inside[kn]
        if a_in:
            out_pts.append(poly[k])
            out_lab.append(labels[k])
            if not b_in:
                t = s[k] / (s[k] - s[kn])
                out_pts.append(poly[k] + t * (poly[kn] - poly[k]))
                out_lab.append(label)
        elif b_in:
            t = s[k] / (s[k] - s[kn])
            out_pts.append(poly[k] + t * (poly[kn] - poly[k]))
            out_lab.append(labels[k])
    return np.array(out_pts), np.array(out_lab, dtype=int)


def voronoi_cell(domain, points, i):
    """Clipped Voronoi cell of generator ``i`` with its edge labels."""
    xi = points[i]
    poly = np.array(domain.vertices)
    labels = -1 - np.arange(len(poly))
    d = np.linalg.norm(points - xi, axis=1)
    order = np.argsort(d, kind="stable")
    radius = np.linalg.norm(poly - xi, axis=1).max()
    for j in order:
        if j == i:
            continue
        # bisector cannot reach the cell once half the distance exceeds its radius
        if 0.5 * d[j] > radius:
            break
        normal = points[j] - xi
        offset = 0.5 * (points[j] @ points[j] - xi @ xi)
        poly, labels = _clip(poly, labels, normal, offset, int(j))
        if len(poly) < 3:
            raise EmptyCell(f"cell {i} vanished while clipping against generator {j}")
        radius = np.linalg.norm(poly - xi, axis=1).max()
    return poly, labels


def tessellate(domain, config):
    """Voronoi tessellation of ``domain`` by the generators of ``config``."""
    check_configuration(domain, config)
    pts = config.points
    n = len(pts)
    cells, labels, areas, centroids = [], [], np.empty(n), np.empty((n, 2))
    for i in range(n):
        poly, lab = voronoi_cell(domain, pts, i)
        area, c = polygon_area_centroid(poly)
        if area <= 0.0:
            raise EmptyCell(f"cell {i} has non-positive area {area!r}")
        poly.setflags(write=False)
        lab.setflags(write=False)
        cells.append(poly)
        labels.append(lab)
        areas[i] = area
        centroids[i] = c

    shared = {}
    for i in range(n):
        poly, lab = cells[i], labels[i]
        seg = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
        for k in np.flatnonzero(lab >= 0):
            key = (min(i, int(lab[k])), max(i, int(lab[k])))
            shared.setdefault(key, [0.0, 0.0])[0 if i == key[0] else 1] += seg[k]
    eps = EDGE_LENGTH_TOL * domain.diameter
    edges = []
    for (i, j), (li, lj) in sorted(shared.items()):
        length = 0.5 * (li + lj)
        if length > eps:
            edges.append((i, j, float(length)))
    areas.setflags(write=False)
    centroids.setflags(write=False)
    return Tessellation(cells=cells, labels=labels, areas=areas, centroids=centroids, edges=edges)


def nearest_generator(points, probes):
    """Index of the nearest generator for each probe point (brute force)."""
    probes = np.asarray(probes, dtype=float)
    d = ((probes[:, None, :] - np.asarray(points)[None, :, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1)


def points_in_convex(poly, probes, tol=0.0):
    """Boolean mask of probes inside (or within ``tol`` of) a CCW convex polygon."""
    poly = np.asarray(poly, dtype=float)
    e = np.roll(poly, -1, axis=0) - poly
    rel = probes[:, None, :] - poly[None, :, :]
    cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
    lengths = np.linalg.norm(e, axis=1)
    return (cross >= -tol * lengths[None, :]).all(axis=1)


def random_configuration(domain, n, rng):
    """``n`` independent uniform points in the interior, by rejection from the bounding box."""
    lo = domain.vertices.min(axis=0)
    hi = domain.vertices.max(axis=0)
    pts = []
    while len(pts) < n:
        p = lo + (hi - lo) * rng.random(2)
        if domain.contains(p):
            pts.append(p)
    return Configuration(np.array(pts).reshape(-1, 2))
