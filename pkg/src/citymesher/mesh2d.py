"""Constrained Delaunay triangulation of the domain with quality refinement.

Incremental Bowyer-Watson insertion with a walking point locator, footprint
edge recovery by flipping, and Ruppert-style refinement: encroached
constrained segments are split (concentric shells near small input angles)
and triangles that are skinny or larger than the target edge length receive
circumcenter points. Triangles carry building markers assigned by centroid
containment: -2 outside every footprint, b >= 0 inside building b.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintIntersection, NumericalFailure
from .geometry import (
    SNAP_TOL,
    _point_segment_distance_many,
    points_in_polygon,
)

MIN_ANGLE_DEG = 20.0
# circumradius / shortest edge bound equivalent to the 20 degree angle target
GOOD_RATIO = 1.0 / (2.0 * math.sin(math.radians(MIN_ANGLE_DEG)))
SMALL_ANGLE_DEG = 60.0

MARKER_EXTERIOR = -2


@dataclass(frozen=True)
class Mesh2D:
    """Conforming triangulation: CCW triangles, per-triangle building marker."""

    vertices: np.ndarray  # (n, 2) float64
    triangles: np.ndarray  # (m, 3) int64
    markers: np.ndarray  # (m,) int64

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "markers", np.asarray(self.markers, dtype=np.int64))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _incircle(ax, ay, bx, by, cx, cy, px, py):
    """Positive if p is strictly inside the circumcircle of CCW (a, b, c)."""
    adx = ax - px
    ady = ay - py
    bdx = bx - px
    bdy = by - py
    cdx = cx - px
    cdy = cy - py
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )


def _circumcenter(ax, ay, bx, by, cx, cy):
    bxr = bx - ax
    byr = by - ay
    cxr = cx - ax
    cyr = cy - ay
    d = 2.0 * (bxr * cyr - byr * cxr)
    if d == 0.0:
        return None
    b2 = bxr * bxr + byr * byr
    c2 = cxr * cxr + cyr * cyr
    return (ax + (cyr * b2 - byr * c2) / d, ay + (bxr * c2 - cxr * b2) / d)


def _spread_bits(n: int) -> int:
    n &= 0xFFFF
    n = (n | (n << 8)) & 0x00FF00FF
    n = (n | (n << 4)) & 0x0F0F0F0F
    n = (n | (n << 2)) & 0x33333333
    n = (n | (n << 1)) & 0x55555555
    return n


class _Triangulation:
    """Edge-map based triangulation kernel.

    Triangles are CCW index triples; ``edge2tri`` maps each directed edge
    (a, b) to the triangle containing it, so the neighbor across an edge is
    the triangle owning the reversed pair. Deleted triangles become None
    slots and ids are never reused, which keeps queued work items safely
    stale instead of aliased.
    """

    def __init__(self, corners):
        self.verts = [tuple(map(float, c)) for c in corners]
        self.tris = []
        self.edge2tri = {}
        self.v2t = {}
        self.constrained = {}  # undirected (min, max) -> origin segment id
        self.origins = []  # origin id -> (input vertex id, input vertex id)
        self.input_vertices = set(range(4))
        self.small_angle = set()  # input vertices where segments meet < 60 deg
        self.shell_of = {}  # steiner vertex id -> (apex vertex id, radius)
        self._last = 0
        (x0, y0), (x1, y1) = corners[0], corners[2]
        self._scale = max(x1 - x0, y1 - y0)
        self._create(0, 1, 2)
        self._create(0, 2, 3)

    # ------------------------------------------------- structure editing

    def _create(self, a, b, c):
        t = len(self.tris)
        self.tris.append((a, b, c))
        e = self.edge2tri
        e[(a, b)] = t
        e[(b, c)] = t
        e[(c, a)] = t
        self.v2t[a] = t
        self.v2t[b] = t
        self.v2t[c] = t
        return t

    def _delete(self, t):
        a, b, c = self.tris[t]
        e = self.edge2tri
        for k in ((a, b), (b, c), (c, a)):
            if e.get(k) == t:
                del e[k]
        self.tris[t] = None

    def _third(self, t, a, b):
        for v in self.tris[t]:
            if v != a and v != b:
                return v
        raise NumericalFailure("degenerate triangle adjacency")

    # ------------------------------------------------------- point query

    def _locate(self, px, py):
        """Walk to the triangle containing (px, py).

        Returns (triangle, edge index or -1); the edge index is set when
        the point lies on that edge within a relative tolerance.
        """
        t = self._last
        if t >= len(self.tris) or self.tris[t] is None:
            t = next(i for i in range(len(self.tris) - 1, -1, -1) if self.tris[i] is not None)
        verts = self.verts
        tol = 1e-12 * self._scale * self._scale
        steps = 0
        limit = 4 * len(self.tris) + 64
        while True:
            steps += 1
            if steps > limit:
                return self._locate_exhaustive(px, py)
            a, b, c = self.tris[t]
            ax, ay = verts[a]
            bx, by = verts[b]
            cx, cy = verts[c]
            d0 = _orient(ax, ay, bx, by, px, py)
            d1 = _orient(bx, by, cx, cy, px, py)
            d2 = _orient(cx, cy, ax, ay, px, py)
            # cross only on clearly negative sides; points within rounding
            # noise of an edge are accepted and classified as on-edge
            if d0 < -tol or d1 < -tol or d2 < -tol:
                if d0 <= d1 and d0 <= d2:
                    nxt = self.edge2tri.get((b, a))
                elif d1 <= d2:
                    nxt = self.edge2tri.get((c, b))
                else:
                    nxt = self.edge2tri.get((a, c))
                if nxt is None:
                    raise NumericalFailure("point locate walked off the hull")
                t = nxt
                continue
            self._last = t
            if d0 <= tol:
                return t, 0
            if d1 <= tol:
                return t, 1
            if d2 <= tol:
                return t, 2
            return t, -1

    def _locate_exhaustive(self, px, py):
        verts = self.verts
        tol = 1e-12 * self._scale * self._scale
        for t, tri in enumerate(self.tris):
            if tri is None:
                continue
            a, b, c = tri
            d0 = _orient(verts[a][0], verts[a][1], verts[b][0], verts[b][1], px, py)
            d1 = _orient(verts[b][0], verts[b][1], verts[c][0], verts[c][1], px, py)
            d2 = _orient(verts[c][0], verts[c][1], verts[a][0], verts[a][1], px, py)
            if d0 >= -tol and d1 >= -tol and d2 >= -tol:
                self._last = t
                for k, d in enumerate((d0, d1, d2)):
                    if d <= tol:
                        return t, k
                return t, -1
        raise NumericalFailure("point outside triangulation")

    # --------------------------------------------------- point insertion

    def cavity_of(self, px, py, seed):
        """Flood the Delaunay cavity of (px, py) from seed triangles.

        Never crosses constrained edges. Returns (cavity list, encroached
        constrained boundary edges by the diametral-circle test).
        """
        cavity = list(seed)
        incav = set(cavity)
        stack = list(cavity)
        verts = self.verts
        hit_segs = []
        while stack:
            t = stack.pop()
            tri = self.tris[t]
            for k in range(3):
                a = tri[k]
                b = tri[(k + 1) % 3]
                key = (a, b) if a < b else (b, a)
                if key in self.constrained:
                    ux, uy = verts[a]
                    vx, vy = verts[b]
                    if (ux - px) * (vx - px) + (uy - py) * (vy - py) < 0.0:
                        hit_segs.append(key)
                    continue
                s = self.edge2tri.get((b, a))
                if s is None or s in incav:
                    continue
                sa, sb, sc = self.tris[s]
                if (
                    _incircle(
                        verts[sa][0], verts[sa][1],
                        verts[sb][0], verts[sb][1],
                        verts[sc][0], verts[sc][1],
                        px, py,
                    )
                    > 0.0
                ):
                    incav.add(s)
                    cavity.append(s)
                    stack.append(s)
        return cavity, hit_segs

    def seed_for(self, px, py):
        """Initial cavity seed: the containing triangle, plus the neighbor
        across the edge when the point lies on one. Returns (seed, on_key)
        where on_key is the constrained-edge key the point sits on, if any."""
        t, on_edge = self._locate(px, py)
        seed = [t]
        on_key = None
        if on_edge >= 0:
            tri = self.tris[t]
            a = tri[on_edge]
            b = tri[(on_edge + 1) % 3]
            key = (a, b) if a < b else (b, a)
            if key in self.constrained:
                on_key = key
            else:
                other = self.edge2tri.get((b, a))
                if other is not None:
                    seed.append(other)
        return seed, on_key

    def insert_point(self, px, py, cavity):
        """Carve the cavity and fan the new vertex; returns (vertex, tris).

        The cavity is first shrunk until it is star-shaped as seen from the
        new point (degenerate fan triangles would otherwise appear when the
        point is collinear with a cavity boundary edge), then reduced to the
        connected component holding the seed triangle.
        """
        verts = self.verts
        incav = set(cavity)
        seeds = set(cavity[:2]) & incav
        while True:
            # keep only the component still connected to the seed
            comp = {cavity[0]}
            stack = [cavity[0]]
            while stack:
                t = stack.pop()
                tri = self.tris[t]
                for k in range(3):
                    a = tri[k]
                    b = tri[(k + 1) % 3]
                    s = self.edge2tri.get((b, a))
                    if s in incav and s not in comp:
                        comp.add(s)
                        stack.append(s)
            incav = comp
            # peel a triangle whose exposed edge faces away from the point
            peeled = None
            for t in sorted(incav):
                if t in seeds:
                    continue
                tri = self.tris[t]
                for k in range(3):
                    a = tri[k]
                    b = tri[(k + 1) % 3]
                    if self.edge2tri.get((b, a)) in incav:
                        continue
                    if (
                        _orient(
                            verts[a][0], verts[a][1], verts[b][0], verts[b][1], px, py
                        )
                        <= 0.0
                    ):
                        peeled = t
                        break
                if peeled is not None:
                    break
            if peeled is None:
                break
            incav.discard(peeled)
        boundary = []
        for t in sorted(incav):
            tri = self.tris[t]
            for k in range(3):
                a = tri[k]
                b = tri[(k + 1) % 3]
                if self.edge2tri.get((b, a)) not in incav:
                    boundary.append((a, b))
        v = len(verts)
        verts.append((px, py))
        for t in incav:
            self._delete(t)
        new_tris = []
        for a, b in boundary:
            # a boundary edge the point sits on is a hull edge being split;
            # leaving it out makes the new vertex a hull vertex
            if _orient(verts[a][0], verts[a][1], verts[b][0], verts[b][1], px, py) <= 0.0:
                continue
            new_tris.append(self._create(a, b, v))
        self._last = new_tris[0]
        return v, new_tris

    # -------------------------------------------------------- star walks

    def _star(self, u):
        """All alive triangles incident to u."""
        t0 = self.v2t.get(u)
        if t0 is None or self.tris[t0] is None:
            t0 = None
            for t, tri in enumerate(self.tris):
                if tri is not None and u in tri:
                    t0 = t
                    break
            if t0 is None:
                return []
            self.v2t[u] = t0
        out = [t0]
        closed = False
        t = t0
        while True:
            tri = self.tris[t]
            i = tri.index(u)
            w = tri[(i + 2) % 3]
            nxt = self.edge2tri.get((u, w))
            if nxt == t0:
                closed = True
                break
            if nxt is None:
                break
            out.append(nxt)
            t = nxt
        if not closed:
            t = t0
            while True:
                tri = self.tris[t]
                i = tri.index(u)
                w = tri[(i + 1) % 3]
                nxt = self.edge2tri.get((w, u))
                if nxt is None or nxt in out:
                    break
                out.append(nxt)
                t = nxt
        return out

    # ------------------------------------------------ constraint recovery

    def insert_constraint(self, u, v, origin):
        """Recover edge (u, v) by flipping crossed edges, then mark it."""
        if u == v:
            return
        key = (u, v) if u < v else (v, u)
        if (u, v) in self.edge2tri or (v, u) in self.edge2tri:
            self.constrained[key] = origin
            return
        verts = self.verts
        ux, uy = verts[u]
        vx, vy = verts[v]
        entry = None
        for t in self._star(u):
            tri = self.tris[t]
            i = tri.index(u)
            p = tri[(i + 1) % 3]
            q = tri[(i + 2) % 3]
            px, py = verts[p]
            qx, qy = verts[q]
            dp = _orient(ux, uy, vx, vy, px, py)
            dq = _orient(ux, uy, vx, vy, qx, qy)
            if dp == 0.0 and (px - ux) * (vx - ux) + (py - uy) * (vy - uy) > 0.0:
                # collinear vertex on the segment: recover both halves
                self.insert_constraint(u, p, origin)
                self.insert_constraint(p, v, origin)
                return
            if dq == 0.0 and (qx - ux) * (vx - ux) + (qy - uy) * (vy - uy) > 0.0:
                self.insert_constraint(u, q, origin)
                self.insert_constraint(q, v, origin)
                return
            if dp < 0.0 < dq:
                entry = (t, p, q)
                break
        if entry is None:
            raise NumericalFailure(f"constraint ({u}, {v}) found no exit wedge")
        t, p, q = entry
        ckey = (p, q) if p < q else (q, p)
        if ckey in self.constrained:
            raise ConstraintIntersection(f"segment ({u}, {v}) crosses a constrained edge")
        crossed = deque([ckey])
        touched = []
        prev = (p, q)  # directed as it appears in the triangle just left
        cur = self.edge2tri.get((q, p))
        guard = 0
        limit = 4 * len(self.tris) + 64
        while True:
            guard += 1
            if guard > limit:
                raise NumericalFailure("constraint march did not terminate")
            if cur is None:
                raise NumericalFailure("constraint march left the hull")
            r = self._third(cur, prev[0], prev[1])
            if r == v:
                break
            rx, ry = verts[r]
            dr = _orient(ux, uy, vx, vy, rx, ry)
            if dr == 0.0 and (rx - ux) * (vx - ux) + (ry - uy) * (vy - uy) > 0.0:
                # collinear vertex in the way: recover up to it, then recurse
                self._flip_out(crossed, u, r, touched)
                rkey = (u, r) if u < r else (r, u)
                self.constrained[rkey] = origin
                self.insert_constraint(r, v, origin)
                self._legalize(touched)
                return
            tri = self.tris[cur]
            nxt = None
            for k in range(3):
                e0 = tri[k]
                e1 = tri[(k + 1) % 3]
                if (e0, e1) == (prev[1], prev[0]):
                    continue
                x0, y0 = verts[e0]
                x1, y1 = verts[e1]
                s0 = _orient(ux, uy, vx, vy, x0, y0)
                s1 = _orient(ux, uy, vx, vy, x1, y1)
                if (s0 > 0.0 > s1) or (s0 < 0.0 < s1):
                    o0 = _orient(x0, y0, x1, y1, ux, uy)
                    o1 = _orient(x0, y0, x1, y1, vx, vy)
                    if (o0 > 0.0 > o1) or (o0 < 0.0 < o1):
                        nxt = (e0, e1)
                        break
            if nxt is None:
                raise NumericalFailure("constraint march lost the segment")
            ckey = (nxt[0], nxt[1]) if nxt[0] < nxt[1] else (nxt[1], nxt[0])
            if ckey in self.constrained:
                raise ConstraintIntersection(f"segment ({u}, {v}) crosses a constrained edge")
            crossed.append(ckey)
            prev = nxt
            cur = self.edge2tri.get((nxt[1], nxt[0]))
        self._flip_out(crossed, u, v, touched)
        if (u, v) not in self.edge2tri and (v, u) not in self.edge2tri:
            raise NumericalFailure(f"constraint ({u}, {v}) not recovered")
        self.constrained[key] = origin
        self._legalize(touched)

    def _flip_out(self, crossed, u, v, touched):
        """Flip queued edges until none crosses segment (u, v)."""
        verts = self.verts
        ux, uy = verts[u]
        vx, vy = verts[v]
        guard = 0
        limit = 100 * (len(crossed) + 4) ** 2 + 1000
        while crossed:
            guard += 1
            if guard > limit:
                raise NumericalFailure("edge recovery flip loop did not terminate")
            a, b = crossed.popleft()
            t1 = self.edge2tri.get((a, b))
            t2 = self.edge2tri.get((b, a))
            if t1 is None or t2 is None:
                continue
            c = self._third(t1, a, b)
            d = self._third(t2, a, b)
            ax, ay = verts[a]
            bx, by = verts[b]
            cx, cy = verts[c]
            dx, dy = verts[d]
            if _orient(ax, ay, dx, dy, cx, cy) > 0.0 and _orient(dx, dy, bx, by, cx, cy) > 0.0:
                self._delete(t1)
                self._delete(t2)
                self._create(a, d, c)
                self._create(d, b, c)
                nkey = (c, d) if c < d else (d, c)
                touched.append(nkey)
                sc = _orient(ux, uy, vx, vy, cx, cy)
                sd = _orient(ux, uy, vx, vy, dx, dy)
                if (sc > 0.0 > sd) or (sc < 0.0 < sd):
                    oc = _orient(cx, cy, dx, dy, ux, uy)
                    od = _orient(cx, cy, dx, dy, vx, vy)
                    if (oc > 0.0 > od) or (oc < 0.0 < od):
                        crossed.append(nkey)
            else:
                crossed.append((a, b))

    def _legalize(self, seed_edges):
        """Lawson flips to restore the Delaunay criterion off new edges."""
        verts = self.verts
        stack = list(seed_edges)
        guard = 0
        while stack:
            guard += 1
            if guard > 100 * len(self.tris) + 10000:
                raise NumericalFailure("legalization did not terminate")
            a, b = stack.pop()
            key = (a, b) if a < b else (b, a)
            if key in self.constrained:
                continue
            t1 = self.edge2tri.get((a, b))
            t2 = self.edge2tri.get((b, a))
            if t1 is None or t2 is None:
                continue
            c = self._third(t1, a, b)
            d = self._third(t2, a, b)
            ax, ay = verts[a]
            bx, by = verts[b]
            cx, cy = verts[c]
            dx, dy = verts[d]
            if _incircle(ax, ay, bx, by, cx, cy, dx, dy) <= 0.0:
                continue
            if not (
                _orient(ax, ay, dx, dy, cx, cy) > 0.0
                and _orient(dx, dy, bx, by, cx, cy) > 0.0
            ):
                continue
            self._delete(t1)
            self._delete(t2)
            self._create(a, d, c)
            self._create(d, b, c)
            stack.extend(((a, d), (d, b), (b, c), (c, a)))


def _segment_small_angles(points, segments):
    """Input vertices where two input segments meet at under 60 degrees."""
    incident = {}
    for (p, q) in segments:
        incident.setdefault(p, []).append(q)
        incident.setdefault(q, []).append(p)
    cos_small = math.cos(math.radians(SMALL_ANGLE_DEG))
    out = set()
    for v, others in incident.items():
        if len(others) < 2:
            continue
        vx, vy = points[v]
        for i in range(len(others)):
            for j in range(i + 1, len(others)):
                ax, ay = points[others[i]]
                bx, by = points[others[j]]
                ux, uy = ax - vx, ay - vy
                wx, wy = bx - vx, by - vy
                nu = math.hypot(ux, uy)
                nw = math.hypot(wx, wy)
                if nu == 0.0 or nw == 0.0:
                    continue
                if (ux * wx + uy * wy) / (nu * nw) > cos_small:
                    out.add(v)
    return out


def _drop_near_footprints(pts: np.ndarray, cm, clear: float) -> np.ndarray:
    keep = np.ones(len(pts), dtype=bool)
    for b in cm.buildings:
        lo_x, lo_y, hi_x, hi_y = b.footprint.bounds
        near = (
            (pts[:, 0] >= lo_x - clear)
            & (pts[:, 0] <= hi_x + clear)
            & (pts[:, 1] >= lo_y - clear)
            & (pts[:, 1] <= hi_y + clear)
            & keep
        )
        if not near.any():
            continue
        sub = pts[near]
        v = b.footprint.vertices
        d = _point_segment_distance_many(sub, v, np.roll(v, -1, axis=0)).min(axis=1)
        bad = (d < clear) | points_in_polygon(sub, b.footprint)
        idx = np.nonzero(near)[0]
        keep[idx[bad]] = False
    return pts[keep]


def _lattice_points(cm, domain, s: float):
    """Near-equilateral seed points over the open parts of the domain.

    Pitches are snapped to divide the domain evenly so the boundary strip
    meshes at lattice size instead of bisection-quantized sizes. Returns
    (boundary points on the hull, interior points); both sets stay 0.6 s
    clear of footprints and interior points stay out of footprints.
    """
    (x0, y0), (x1, y1) = domain
    w = x1 - x0
    hgt = y1 - y0
    clear = 0.6 * s
    nx = max(1, round(w / s))
    sx = w / nx
    ny = max(1, round(hgt / (s * math.sqrt(3.0) / 2.0)))
    sy = hgt / ny
    bpts = []
    for i in range(1, nx):
        bpts.append((x0 + i * sx, y0))
    for i in range(1, nx):
        bpts.append((x0 + i * sx, y1))
    for j in range(1, ny):
        bpts.append((x0, y0 + j * sy))
    for j in range(1, ny):
        bpts.append((x1, y0 + j * sy))
    boundary = np.array(bpts, dtype=np.float64) if bpts else np.empty((0, 2))
    rows = []
    for j in range(1, ny):
        y = y0 + j * sy
        if j % 2 == 1:
            xs = x0 + (np.arange(nx) + 0.5) * sx
        else:
            xs = x0 + np.arange(1, nx) * sx
        if len(xs):
            rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    interior = np.vstack(rows) if rows else np.empty((0, 2))
    boundary = _drop_near_footprints(boundary, cm, clear)
    interior = _drop_near_footprints(interior, cm, clear)
    return boundary, interior


def _refine(tr: _Triangulation, h: float):
    """Ruppert loop: split encroached segments first, then bad triangles."""
    verts = tr.verts
    min_len = 1e-6 * h
    h2 = h * h * (1.0 + 1e-12)
    dup_tol2 = (1e-9 * tr._scale) ** 2
    unsplittable = set()

    def seg_encroached(key):
        u, v = key
        ux, uy = verts[u]
        vx, vy = verts[v]
        for t in (tr.edge2tri.get((u, v)), tr.edge2tri.get((v, u))):
            if t is None:
                continue
            w = tr._third(t, u, v)
            wx, wy = verts[w]
            if (ux - wx) * (vx - wx) + (uy - wy) * (vy - wy) < 0.0:
                return True
        return False

    def tri_shape(t):
        """(is_bad, is_seditious) for an alive triangle."""
        a, b, c = tr.tris[t]
        ax, ay = verts[a]
        bx, by = verts[b]
        cx, cy = verts[c]
        l0 = (bx - ax) ** 2 + (by - ay) ** 2
        l1 = (cx - bx) ** 2 + (cy - by) ** 2
        l2 = (ax - cx) ** 2 + (ay - cy) ** 2
        if l0 > h2 or l1 > h2 or l2 > h2:
            return True, False
        area2 = _orient(ax, ay, bx, by, cx, cy)
        if area2 <= 0.0:
            return False, False
        lmin = min(l0, l1, l2)
        r2 = (l0 * l1 * l2) / (4.0 * area2 * area2)
        if r2 <= GOOD_RATIO * GOOD_RATIO * lmin:
            return False, False
        if lmin == l0:
            p, q = a, b
        elif lmin == l1:
            p, q = b, c
        else:
            p, q = c, a
        sp = tr.shell_of.get(p)
        sq = tr.shell_of.get(q)
        if sp is not None and sq is not None and sp[0] == sq[0]:
            if abs(sp[1] - sq[1]) <= 1e-9 * max(sp[1], sq[1]):
                return True, True
        return True, False

    # queue entries are (key, force); force marks splits demanded by a point
    # that will not be inserted, which the apex re-check cannot see
    seg_queue = deque((k, False) for k in sorted(tr.constrained) if seg_encroached(k))
    tri_queue = deque()
    for t, tri in enumerate(tr.tris):
        if tri is not None:
            bad, sed = tri_shape(t)
            if bad and not sed:
                tri_queue.append(t)

    def after_insert(new_tris):
        for t in new_tris:
            if tr.tris[t] is None:
                continue
            a, b, c = tr.tris[t]
            for e in ((a, b), (b, c), (c, a)):
                key = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
                if key in tr.constrained and seg_encroached(key):
                    seg_queue.append((key, False))
            bad, sed = tri_shape(t)
            if bad and not sed:
                tri_queue.append(t)

    def split_segment(key):
        u, v = key
        origin = tr.constrained[key]
        ux, uy = verts[u]
        vx, vy = verts[v]
        length = math.hypot(vx - ux, vy - uy)
        if length <= 2.0 * min_len:
            unsplittable.add(key)
            return
        frac = 0.5
        shell = None
        at_u = u in tr.input_vertices and u in tr.small_angle
        at_v = v in tr.input_vertices and v in tr.small_angle
        if at_u != at_v:
            apex = u if at_u else v
            r = 2.0 ** round(math.log2(length / 2.0))
            frac = r / length if at_u else 1.0 - r / length
            shell = (apex, r)
        mx = ux + frac * (vx - ux)
        my = uy + frac * (vy - uy)
        seed = [t for t in (tr.edge2tri.get((u, v)), tr.edge2tri.get((v, u))) if t is not None]
        del tr.constrained[key]
        cavity, _ = tr.cavity_of(mx, my, seed)
        w, new_tris = tr.insert_point(mx, my, cavity)
        if shell is not None:
            tr.shell_of[w] = shell
        k1 = (u, w) if u < w else (w, u)
        k2 = (v, w) if v < w else (w, v)
        tr.constrained[k1] = origin
        tr.constrained[k2] = origin
        for k in (k1, k2):
            if seg_encroached(k):
                seg_queue.append((k, False))
        after_insert(new_tris)

    guard = 0
    (x0, y0) = tr.verts[0]
    (x1, y1) = tr.verts[2]
    budget = 10000 + 400 * int((x1 - x0) * (y1 - y0) / (h * h)) + 4000 * len(tr.constrained)
    while seg_queue or tri_queue:
        guard += 1
        if guard > budget:
            raise NumericalFailure("refinement did not converge within budget")
        if seg_queue:
            key, force = seg_queue.popleft()
            if key in tr.constrained and (force or seg_encroached(key)):
                split_segment(key)
            continue
        t = tri_queue.popleft()
        if tr.tris[t] is None:
            continue
        bad, sed = tri_shape(t)
        if not bad or sed:
            continue
        a, b, c = tr.tris[t]
        cc = _circumcenter(
            verts[a][0], verts[a][1], verts[b][0], verts[b][1], verts[c][0], verts[c][1]
        )
        if cc is None:
            continue
        ccx, ccy = cc
        tr._last = t
        try:
            seed, on_key = tr.seed_for(ccx, ccy)
        except NumericalFailure:
            continue
        if on_key is not None:
            # circumcenter sits on a constrained segment: split it instead
            if on_key in unsplittable:
                continue
            seg_queue.append((on_key, True))
            tri_queue.append(t)
            continue
        near = False
        for vv in tr.tris[seed[0]]:
            dx = verts[vv][0] - ccx
            dy = verts[vv][1] - ccy
            if dx * dx + dy * dy <= dup_tol2:
                near = True
                break
        if near:
            continue
        cavity, hit_segs = tr.cavity_of(ccx, ccy, seed)
        if hit_segs:
            live = [k for k in hit_segs if k not in unsplittable]
            if not live:
                continue
            for k in live:
                seg_queue.append((k, True))
            tri_queue.append(t)
            continue
        _, new_tris = tr.insert_point(ccx, ccy, cavity)
        after_insert(new_tris)


def generate_mesh2d(cm, domain, h: float) -> Mesh2D:
    """Quality triangulation of the domain conforming to all footprints.

    Refinement runs until every triangle has minimum angle at least 20
    degrees (away from small input angles) and no edge longer than h.
    Raises ConstraintIntersection if two footprint edges properly cross.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    domain = np.asarray(domain, dtype=np.float64).reshape(2, 2)
    (x0, y0), (x1, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must have positive extent")
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    tr = _Triangulation(corners)

    # Morton insertion order keeps locator walks short
    sx = 65535.0 / max(x1 - x0, 1e-30)
    sy = 65535.0 / max(y1 - y0, 1e-30)

    def _morton(px, py):
        ix = _spread_bits(int(min(65535.0, max(0.0, (px - x0) * sx))))
        iy = _spread_bits(int(min(65535.0, max(0.0, (py - y0) * sy))))
        return ix | (iy << 1)

    def _plain_insert(px, py):
        seed, _ = tr.seed_for(px, py)
        cavity, _ = tr.cavity_of(px, py, seed)
        return tr.insert_point(px, py, cavity)

    # seed the hull and the open interior with a near-equilateral lattice;
    # boundary points go in first so the rectangle sides subdivide at the
    # lattice pitch rather than by refinement bisection
    lat_boundary, lat_interior = _lattice_points(cm, domain, 0.92 * h)
    for px, py in lat_boundary:
        _plain_insert(float(px), float(py))

    # collect footprint vertices, snapping near-duplicates to the first seen
    snap = {}
    pending = {}

    def _snap_key(x, y):
        return (round(x / SNAP_TOL), round(y / SNAP_TOL))

    def _existing_near(x, y):
        k = _snap_key(x, y)
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                hit = snap.get((k[0] + di, k[1] + dj))
                if hit is not None:
                    hx, hy = pending[hit] if hit in pending else tr.verts[hit]
                    if math.hypot(hx - x, hy - y) <= SNAP_TOL:
                        return hit
        return None

    for i, (cx, cy) in enumerate(corners):
        snap[_snap_key(cx, cy)] = i

    ring_ids = []
    next_id = 4
    coords = []
    for b in cm.buildings:
        ids = []
        for (vx, vy) in b.footprint.vertices:
            vid = _existing_near(float(vx), float(vy))
            if vid is None:
                vid = next_id
                next_id += 1
                snap[_snap_key(float(vx), float(vy))] = vid
                pending[vid] = (float(vx), float(vy))
                coords.append((vid, float(vx), float(vy)))
            ids.append(vid)
        ring_ids.append(ids)

    actual_id = {i: i for i in range(4)}
    for vid, px, py in sorted(coords, key=lambda it: _morton(it[1], it[2])):
        if not (x0 < px < x1 and y0 < py < y1):
            raise ValueError("footprint vertex outside the open domain")
        real, _ = _plain_insert(px, py)
        actual_id[vid] = real
    ring_ids = [[actual_id[v] for v in ids] for ids in ring_ids]

    # constrain the rectangle sides (the hull of the triangulation)
    side_corners = ((0, 1), (1, 2), (2, 3), (3, 0))
    hull = sorted(
        (a, b) for (a, b) in tr.edge2tri if tr.edge2tri.get((b, a)) is None
    )
    for a, b in hull:
        ax, ay = tr.verts[a]
        bx, by = tr.verts[b]
        if ay == y0 and by == y0:
            s = 0
        elif ax == x1 and bx == x1:
            s = 1
        elif ay == y1 and by == y1:
            s = 2
        else:
            s = 3
        tr.constrained[(a, b) if a < b else (b, a)] = s
    tr.origins = list(side_corners)
    input_segments = list(side_corners)

    for ids in ring_ids:
        n = len(ids)
        for k in range(n):
            u, v = ids[k], ids[(k + 1) % n]
            origin = len(tr.origins)
            tr.origins.append((u, v))
            input_segments.append((u, v))
            tr.insert_constraint(u, v, origin)

    tr.input_vertices = set(range(4)) | {v for ids in ring_ids for v in ids}
    tr.small_angle = _segment_small_angles(tr.verts, input_segments)

    order = sorted(
        range(len(lat_interior)),
        key=lambda k: _morton(lat_interior[k][0], lat_interior[k][1]),
    )
    for k in order:
        _plain_insert(float(lat_interior[k][0]), float(lat_interior[k][1]))

    # restore the Delaunay property everywhere before refinement; bulk
    # insertion near collinear hull points can leave locally illegal edges
    tr._legalize(list(tr.edge2tri.keys()))

    _refine(tr, h)

    tris = [t for t in tr.tris if t is not None]
    vertices = np.array(tr.verts, dtype=np.float64)
    triangles = np.array(tris, dtype=np.int64)
    markers = np.full(len(triangles), MARKER_EXTERIOR, dtype=np.int64)
    cent = vertices[triangles].mean(axis=1)
    for b_idx, b in enumerate(cm.buildings):
        lo_x, lo_y, hi_x, hi_y = b.footprint.bounds
        mask = (
            (cent[:, 0] >= lo_x)
            & (cent[:, 0] <= hi_x)
            & (cent[:, 1] >= lo_y)
            & (cent[:, 1] <= hi_y)
        )
        if mask.any():
            inside = points_in_polygon(cent[mask], b.footprint)
            idx = np.nonzero(mask)[0][inside]
            markers[idx] = b_idx
    return Mesh2D(vertices=vertices, triangles=triangles, markers=markers)
