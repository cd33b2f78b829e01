"""2D polygon kernel: cleaning, predicates, hulls, unions and footprint merging.

Conventions used throughout:

* a polygon is a counter-clockwise, open ring stored as an (n, 2) float64
  array (the closing vertex is implicit),
* coordinates are metric; the default vertex snap tolerance is 1e-3 m and
  the collinearity tolerance is a turn angle of 1e-6 rad,
* points on a polygon boundary count as inside,
* "touching" polygons (distance 0, zero-area overlap) are treated as
  intersecting for union purposes.

The only operation delegated to shapely/GEOS is the polygon union itself;
all predicates and the merge heuristics are implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
import shapely.geometry

from .errors import DegenerateHull, DegeneratePolygon, NumericalFailure

SNAP_TOL = 1e-3
ANGLE_TOL = 1e-6
MERGE_EPS = 1.0
MERGE_MAX_ITER = 3


@dataclass(frozen=True)
class Polygon:
    """Simple polygon as a CCW open vertex ring, shape (n, 2) float64."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DegeneratePolygon(f"expected (n, 2) vertex array, got shape {v.shape}")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def bounds(self) -> np.ndarray:
        """[xmin, ymin, xmax, ymax] of the vertex ring."""
        v = self.vertices
        return np.array([v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()])


def signed_area(vertices: np.ndarray) -> float:
    """Shoelace signed area; positive for counter-clockwise rings."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly: Polygon) -> float:
    return signed_area(poly.vertices)


def polygon_perimeter(poly: Polygon) -> float:
    v = poly.vertices
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def polygon_centroid(poly: Polygon) -> np.ndarray:
    """Area centroid of the polygon interior."""
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    a = 0.5 * cross.sum()
    if abs(a) < 1e-300:
        return v.mean(axis=0)
    cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
    cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def _orient(ax, ay, bx, by, cx, cy):
    """Twice the signed area of triangle abc."""
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    """True when open segments p1p2 and q1q2 cross at an interior point."""
    d1 = _orient(q1[0], q1[1], q2[0], q2[1], p1[0], p1[1])
    d2 = _orient(q1[0], q1[1], q2[0], q2[1], p2[0], p2[1])
    d3 = _orient(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1])
    d4 = _orient(p1[0], p1[1], p2[0], p2[1], q2[0], q2[1])
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _on_segment(p, a, b) -> bool:
    """True when point p lies on the closed segment ab (exact arithmetic sense)."""
    if _orient(a[0], a[1], b[0], b[1], p[0], p[1]) != 0.0:
        return False
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def is_simple(vertices: np.ndarray) -> bool:
    """Check that the ring self-intersects nowhere.

    Non-adjacent edges must be disjoint; adjacent edges may share only their
    common endpoint (a fold-back counts as an intersection).
    """
    v = np.asarray(vertices, dtype=np.float64)
    n = len(v)
    if n < 3:
        return False
    nxt = np.roll(v, -1, axis=0)
    for i in range(n):
        a1, a2 = v[i], nxt[i]
        for j in range(i + 1, n):
            b1, b2 = v[j], nxt[j]
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                # shared endpoint allowed; anything more is a fold or overlap
                shared = a2 if j == i + 1 else a1
                other_a = a1 if j == i + 1 else a2
                other_b = b2 if j == i + 1 else b1
                d = _orient(shared[0], shared[1], other_a[0], other_a[1], other_b[0], other_b[1])
                if d == 0.0:
                    da = other_a - shared
                    db = other_b - shared
                    if float(da @ db) > 0.0:
                        return False
                continue
            if _segments_properly_intersect(a1, a2, b1, b2):
                return False
            if _on_segment(b1, a1, a2) or _on_segment(b2, a1, a2):
                return False
            if _on_segment(a1, b1, b2) or _on_segment(a2, b1, b2):
                return False
    return True


def clean_polygon(raw, snap_tol: float = SNAP_TOL, angle_tol: float = ANGLE_TOL) -> Polygon:
    """Normalize a raw vertex ring into a valid Polygon.

    Drops an explicit closing vertex, merges consecutive vertices within
    ``snap_tol`` (cyclically), removes collinear continuations whose turn
    angle is below ``angle_tol``, and reverses clockwise input. Idempotent:
    cleaning a cleaned polygon returns it unchanged.

    Raises
    ------
    DegeneratePolygon
        If fewer than 3 vertices survive, the area is near zero, or the
        result self-intersects.
    """
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 2:
        raise DegeneratePolygon(f"expected (n, 2) vertex array, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise DegeneratePolygon("non-finite vertex coordinate")

    # cyclic snap-merge of consecutive near-duplicates, iterated to a fixed point
    changed = True
    while changed:
        changed = False
        n = len(v)
        if n == 0:
            raise DegeneratePolygon("no vertices")
        keep = []
        for i in range(n):
            if not keep:
                keep.append(i)
                continue
            if np.hypot(*(v[i] - v[keep[-1]])) <= snap_tol:
                changed = True
                continue
            keep.append(i)
        # wrap-around pair: last kept vs first kept
        if len(keep) > 1 and np.hypot(*(v[keep[-1]] - v[keep[0]])) <= snap_tol:
            keep.pop()
            changed = True
        v = v[keep]
        if len(v) < 3:
            raise DegeneratePolygon(f"only {len(v)} distinct vertices after snapping")

    # drop collinear continuations, iterated because removals expose new ones
    changed = True
    while changed:
        changed = False
        n = len(v)
        keep = np.ones(n, dtype=bool)
        for i in range(n):
            a = v[(i - 1) % n]
            b = v[i]
            c = v[(i + 1) % n]
            d1 = b - a
            d2 = c - b
            turn = abs(math.atan2(d1[0] * d2[1] - d1[1] * d2[0], float(d1 @ d2)))
            if turn < angle_tol:
                keep[i] = False
                changed = True
        if changed:
            v = v[keep]
            if len(v) < 3:
                raise DegeneratePolygon("polygon collapsed while removing collinear vertices")

    area = signed_area(v)
    if area < 0.0:
        v = v[::-1].copy()
        area = -area
    if area <= snap_tol * snap_tol:
        raise DegeneratePolygon(f"near-zero area {area:g}")
    if not is_simple(v):
        raise DegeneratePolygon("self-intersecting ring")
    return Polygon(v)


def _quadrant(dx, dy):
    if dx > 0.0 and dy >= 0.0:
        return 0
    if dx <= 0.0 and dy > 0.0:
        return 1
    if dx < 0.0 and dy <= 0.0:
        return 2
    return 3


def point_in_polygon(p, poly: Polygon) -> bool:
    """Boundary-inclusive point-in-polygon test by quadrant winding accumulation.

    Walks the ring accumulating quadrant transitions of the vertex directions
    seen from ``p``; a nonzero total winding means inside. Points on an edge
    or vertex return True.
    """
    px, py = float(p[0]), float(p[1])
    v = poly.vertices
    n = len(v)
    winding = 0
    x1 = v[-1, 0] - px
    y1 = v[-1, 1] - py
    q1 = _quadrant(x1, y1)
    for i in range(n):
        x2 = v[i, 0] - px
        y2 = v[i, 1] - py
        if x2 == 0.0 and y2 == 0.0:
            return True
        q2 = _quadrant(x2, y2)
        d = (q2 - q1) % 4
        cross = x1 * y2 - y1 * x2
        if d == 2:
            if cross == 0.0:
                return True  # edge passes through p
            winding += 2 if cross > 0.0 else -2
        elif d == 1:
            winding += 1
        elif d == 3:
            winding -= 1
        if cross == 0.0 and (x1 * x2 + y1 * y2) <= 0.0:
            return True
        x1, y1, q1 = x2, y2, q2
    return winding != 0


def points_in_polygon(points, poly: Polygon, chunk: int = 8192) -> np.ndarray:
    """Vectorized boundary-inclusive winding test for many points at once."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    v = poly.vertices
    out = np.empty(len(pts), dtype=bool)
    for s in range(0, len(pts), chunk):
        blk = pts[s : s + chunk]
        dx = v[None, :, 0] - blk[:, 0:1]  # (m, n)
        dy = v[None, :, 1] - blk[:, 1:2]
        quad = np.full(dx.shape, 3, dtype=np.int8)
        quad[(dx > 0.0) & (dy >= 0.0)] = 0
        quad[(dx <= 0.0) & (dy > 0.0)] = 1
        quad[(dx < 0.0) & (dy <= 0.0)] = 2
        dx2 = np.roll(dx, -1, axis=1)
        dy2 = np.roll(dy, -1, axis=1)
        quad2 = np.roll(quad, -1, axis=1)
        cross = dx * dy2 - dy * dx2
        dot = dx * dx2 + dy * dy2
        delta = (quad2 - quad) % 4
        step = np.zeros(dx.shape, dtype=np.int64)
        step[delta == 1] = 1
        step[delta == 3] = -1
        two = delta == 2
        step[two & (cross > 0.0)] = 2
        step[two & (cross < 0.0)] = -2
        on_edge = (cross == 0.0) & (dot <= 0.0)
        inside = step.sum(axis=1) != 0
        out[s : s + len(blk)] = inside | on_edge.any(axis=1)
    return out


def _point_segment_distance_many(points, seg_a, seg_b):
    """Distances from each point to each segment; returns (m, n) array."""
    p = np.asarray(points, dtype=np.float64)[:, None, :]  # (m, 1, 2)
    a = np.asarray(seg_a, dtype=np.float64)[None, :, :]  # (1, n, 2)
    b = np.asarray(seg_b, dtype=np.float64)[None, :, :]
    ab = b - a
    ab2 = (ab * ab).sum(axis=2)
    ab2 = np.where(ab2 == 0.0, 1.0, ab2)
    t = ((p - a) * ab).sum(axis=2) / ab2
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    d = p - proj
    return np.sqrt((d * d).sum(axis=2))


def point_segment_distance(p, a, b) -> float:
    return float(_point_segment_distance_many(np.asarray(p, float)[None, :], [a], [b])[0, 0])


def _edges_properly_cross(a: Polygon, b: Polygon) -> bool:
    """Vectorized check for any proper crossing between edges of a and b."""
    va = a.vertices
    vb = b.vertices
    a1 = va[:, None, :]
    a2 = np.roll(va, -1, axis=0)[:, None, :]
    b1 = vb[None, :, :]
    b2 = np.roll(vb, -1, axis=0)[None, :, :]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]
        ) * (r[..., 0] - p[..., 0])

    d1 = orient(b1, b2, a1)
    d2 = orient(b1, b2, a2)
    d3 = orient(a1, a2, b1)
    d4 = orient(a1, a2, b2)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)
    return bool(proper.any())


def bbox_distance(a: Polygon, b: Polygon) -> float:
    """Euclidean distance between the bounding boxes (lower bound on polygon distance)."""
    ba, bb = a.bounds, b.bounds
    dx = max(ba[0] - bb[2], bb[0] - ba[2], 0.0)
    dy = max(ba[1] - bb[3], bb[1] - ba[3], 0.0)
    return math.hypot(dx, dy)


def polygon_distance(a: Polygon, b: Polygon) -> float:
    """Minimum distance between two polygons, 0 when they intersect or touch.

    Containment and proper edge crossings return 0; otherwise the minimum of
    all vertex-to-edge distances in both directions (exact for non-crossing
    edge sets).
    """
    if _edges_properly_cross(a, b):
        return 0.0
    if point_in_polygon(a.vertices[0], b) or point_in_polygon(b.vertices[0], a):
        return 0.0
    va, vb = a.vertices, b.vertices
    d1 = _point_segment_distance_many(va, vb, np.roll(vb, -1, axis=0)).min()
    d2 = _point_segment_distance_many(vb, va, np.roll(va, -1, axis=0)).min()
    return float(min(d1, d2))


def polygons_closer_than(a: Polygon, b: Polygon, eps: float) -> bool:
    """polygon_distance(a, b) < eps, with a bounding-box early exit."""
    if bbox_distance(a, b) >= eps:
        return False
    return polygon_distance(a, b) < eps


def convex_hull(points) -> Polygon:
    """Strict convex hull (Andrew's monotone chain), CCW, no collinear vertices.

    Raises DegenerateHull when fewer than 3 non-collinear points are given.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateHull(f"expected (n, 2) point array, got shape {pts.shape}")
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 3:
        raise DegenerateHull(f"{len(uniq)} distinct points")
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    p = uniq[order]

    def half(chain_pts):
        chain = []
        for q in chain_pts:
            while len(chain) >= 2 and _orient(
                chain[-2][0], chain[-2][1], chain[-1][0], chain[-1][1], q[0], q[1]
            ) <= 0.0:
                chain.pop()
            chain.append(q)
        return chain

    lower = half(p)
    upper = half(p[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("all points collinear")
    return Polygon(np.array(hull))


def minimum_clearance(poly: Polygon) -> float:
    """Smallest feature size of the ring.

    Minimum over all distinct vertex pairs and all vertex-to-non-incident-edge
    distances. A unit square gives 1, a regular hexagon of side 2 gives 2.
    """
    v = poly.vertices
    n = len(v)
    diff = v[:, None, :] - v[None, :, :]
    dv = np.sqrt((diff * diff).sum(axis=2))
    iu = np.triu_indices(n, k=1)
    best = float(dv[iu].min())
    d = _point_segment_distance_many(v, v, np.roll(v, -1, axis=0))  # (vertex, edge)
    idx = np.arange(n)
    d[idx, idx] = np.inf  # edge starting at the vertex
    d[(idx + 1) % n, idx] = np.inf  # edge ending at the vertex
    best = min(best, float(d.min()))
    return best


def vertex_projections(a: Polygon, b: Polygon, eps: float) -> np.ndarray:
    """Closest-point projections of a's vertices onto b's edges within eps.

    For every vertex v of ``a`` and edge e of ``b``, the closest point p on e
    is included iff ||v - p|| < eps. Exact duplicates (corner hits shared by
    two edges) are reported once; returns an (k, 2) array, possibly empty.
    """
    va = a.vertices
    vb = b.vertices
    seg_a = vb
    seg_b = np.roll(vb, -1, axis=0)
    p = va[:, None, :]
    ab = (seg_b - seg_a)[None, :, :]
    ab2 = (ab * ab).sum(axis=2)
    ab2 = np.where(ab2 == 0.0, 1.0, ab2)
    t = ((p - seg_a[None, :, :]) * ab).sum(axis=2) / ab2
    t = np.clip(t, 0.0, 1.0)
    proj = seg_a[None, :, :] + t[..., None] * ab
    dist = np.sqrt(((p - proj) ** 2).sum(axis=2))
    hits = proj[dist < eps]
    if len(hits) == 0:
        return np.empty((0, 2))
    seen = set()
    out = []
    for q in hits:
        key = (q[0], q[1])
        if key not in seen:
            seen.add(key)
            out.append(q)
    return np.array(out)


def polygon_union(a: Polygon, b: Polygon, snap_tol: float = SNAP_TOL) -> Polygon | None:
    """Union of two polygons; None signals a multi-component (disjoint) result.

    Interior rings of the union are discarded (outer boundary only). Touching
    inputs merge into a single polygon. Raises NumericalFailure when the
    backend cannot produce a polygonal result.
    """
    sa = shapely.geometry.Polygon(a.vertices)
    sb = shapely.geometry.Polygon(b.vertices)
    try:
        u = sa.union(sb)
    except Exception as exc:  # GEOS topology errors
        raise NumericalFailure(f"union failed: {exc}") from exc
    if u.is_empty:
        raise NumericalFailure("union produced an empty geometry")
    if u.geom_type == "GeometryCollection":
        parts = [g for g in u.geoms if g.geom_type in ("Polygon", "MultiPolygon")]
        if not parts:
            raise NumericalFailure("union produced no polygonal parts")
        u = shapely.union_all(parts)
    if u.geom_type == "MultiPolygon":
        return None
    if u.geom_type != "Polygon":
        raise NumericalFailure(f"union produced {u.geom_type}")
    ring = np.asarray(u.exterior.coords)[:-1]
    try:
        return clean_polygon(ring, snap_tol=snap_tol)
    except DegeneratePolygon as exc:
        raise NumericalFailure(f"union ring unusable: {exc}") from exc


def _union_many(polys, snap_tol: float) -> Polygon | None:
    geoms = [shapely.geometry.Polygon(p.vertices) for p in polys]
    try:
        u = shapely.union_all(geoms)
    except Exception as exc:
        raise NumericalFailure(f"union failed: {exc}") from exc
    if u.is_empty:
        raise NumericalFailure("union produced an empty geometry")
    if u.geom_type == "MultiPolygon":
        return None
    if u.geom_type != "Polygon":
        raise NumericalFailure(f"union produced {u.geom_type}")
    try:
        return clean_polygon(np.asarray(u.exterior.coords)[:-1], snap_tol=snap_tol)
    except DegeneratePolygon as exc:
        raise NumericalFailure(f"union ring unusable: {exc}") from exc


def _acceptable(c: Polygon | None, eps: float) -> bool:
    if c is None:
        return False
    return is_simple(c.vertices) and minimum_clearance(c) >= eps


def merge_polygons(
    a: Polygon,
    b: Polygon,
    eps: float = MERGE_EPS,
    max_iter: int = MERGE_MAX_ITER,
    snap_tol: float = SNAP_TOL,
) -> Polygon:
    """Merge two nearby footprints into one simple polygon.

    Tries progressively blunter candidates until one is acceptable, where
    acceptable means a simple polygon whose minimum clearance is at least the
    current eps:

    1. plain union of a and b;
    2. up to ``max_iter`` rounds: union of a, b and the convex hull of the
       mutual vertex projections within eps, doubling eps after each failed
       round;
    3. union of the two convex hulls;
    4. convex hull of all vertices (always accepted).

    The result contains every vertex of ``a`` and ``b`` (inside it, or within
    the snap tolerance of its boundary) and is cleaned before returning.
    """
    eps_cur = eps
    try:
        c = polygon_union(a, b, snap_tol=snap_tol)
        if _acceptable(c, eps_cur):
            return c
    except NumericalFailure:
        pass

    for _ in range(max_iter):
        pa = vertex_projections(a, b, eps_cur)
        pb = vertex_projections(b, a, eps_cur)
        patch_pts = np.vstack([p for p in (pa, pb) if len(p)]) if (len(pa) or len(pb)) else None
        if patch_pts is not None and len(patch_pts) >= 3:
            try:
                patch = convex_hull(patch_pts)
                c = _union_many([a, b, patch], snap_tol)
                if _acceptable(c, eps_cur):
                    return c
            except (DegenerateHull, NumericalFailure):
                pass
        eps_cur *= 2.0

    try:
        c = _union_many([convex_hull(a.vertices), convex_hull(b.vertices)], snap_tol)
        if _acceptable(c, eps_cur):
            return c
    except (DegenerateHull, NumericalFailure):
        pass

    hull = convex_hull(np.vstack([a.vertices, b.vertices]))
    return clean_polygon(hull.vertices, snap_tol=snap_tol)
