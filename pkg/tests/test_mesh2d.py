"""Triangulation tests: conformity, constraint recovery, quality bounds,
marker correctness and refinement scaling."""

import numpy as np
import pytest

from citymesher.citymodel import make_city_model
from citymesher.errors import ConstraintIntersection
from citymesher.mesh2d import GOOD_RATIO, Mesh2D, generate_mesh2d


def square(x0, y0, s):
    return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], float)


def empty_model(w, hgt):
    return make_city_model([], [[0, 0], [w, hgt]])


def edge_counts(mesh):
    counts = {}
    for tri in mesh.triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def triangle_areas(mesh):
    v = mesh.vertices[mesh.triangles]
    return 0.5 * (
        (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
        - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    )


def all_angles_deg(mesh):
    v = mesh.vertices[mesh.triangles]
    out = []
    for i in range(3):
        a = v[:, i]
        b = v[:, (i + 1) % 3]
        c = v[:, (i + 2) % 3]
        u = b - a
        w = c - a
        cosv = (u * w).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1)
        )
        out.append(np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0))))
    return np.column_stack(out)


def edge_lengths(mesh):
    v = mesh.vertices[mesh.triangles]
    d = v - np.roll(v, -1, axis=1)
    return np.linalg.norm(d, axis=2)


def ray_cast_inside(p, poly):
    x, y = p
    n = len(poly)
    inside = False
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc > x:
                inside = not inside
    return inside


def random_clear_city(rng, n, extent, clearance=1.5):
    rects = []
    guard = 0
    while len(rects) < n and guard < 20000:
        guard += 1
        s = rng.uniform(5.0, 15.0)
        t = rng.uniform(5.0, 15.0)
        x0 = rng.uniform(1.0 + clearance, extent - s - 1.0 - clearance)
        y0 = rng.uniform(1.0 + clearance, extent - t - 1.0 - clearance)
        box = (x0, y0, x0 + s, y0 + t)
        ok = True
        for other in rects:
            dx = max(other[0] - box[2], box[0] - other[2], 0.0)
            dy = max(other[1] - box[3], box[1] - other[3], 0.0)
            if max(dx, dy) < clearance:
                ok = False
                break
        if ok:
            rects.append(box)
    assert len(rects) == n
    rings = [
        np.array([[a, b], [c, b], [c, d], [a, d]], float) for a, b, c, d in rects
    ]
    return make_city_model(rings, [[0, 0], [extent, extent]])


def test_empty_unit_square_euler():
    mesh = generate_mesh2d(empty_model(1.0, 1.0), [[0, 0], [1, 1]], 0.5)
    v = mesh.num_vertices
    f = mesh.num_triangles + 1
    e = len(edge_counts(mesh))
    assert v - e + f == 2
    assert (mesh.markers == -2).all()


def test_conformity_edge_sharing():
    mesh = generate_mesh2d(empty_model(4.0, 3.0), [[0, 0], [4, 3]], 0.8)
    counts = edge_counts(mesh)
    for (a, b), c in counts.items():
        assert c in (1, 2)
    # edges used once lie on the domain boundary
    for (a, b), c in counts.items():
        if c == 1:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            on_x = (pa[0] == pb[0]) and pa[0] in (0.0, 4.0)
            on_y = (pa[1] == pb[1]) and pa[1] in (0.0, 3.0)
            assert on_x or on_y


def test_all_triangles_ccw_positive():
    rng = np.random.default_rng(2)
    cm = random_clear_city(rng, 6, 60.0)
    mesh = generate_mesh2d(cm, cm.domain, 4.0)
    assert (triangle_areas(mesh) > 0.0).all()


def test_area_conservation():
    rng = np.random.default_rng(4)
    cm = random_clear_city(rng, 8, 70.0)
    mesh = generate_mesh2d(cm, cm.domain, 5.0)
    total = triangle_areas(mesh).sum()
    assert abs(total - 70.0 * 70.0) <= 1e-6 * 70.0 * 70.0


def test_centered_building_edges_and_markers():
    cm = make_city_model([square(4.5, 4.5, 1.0)], [[0, 0], [10, 10]])
    mesh = generate_mesh2d(cm, [[0, 0], [10, 10]], 1.0)
    fp = cm.buildings[0].footprint.vertices
    # footprint corners appear unmoved among mesh vertices
    for p in fp:
        assert (np.abs(mesh.vertices - p).max(axis=1) < 1e-12).any()
    # every footprint edge is covered exactly by collinear mesh edges
    counts = edge_counts(mesh)
    for k in range(4):
        p, q = fp[k], fp[(k + 1) % 4]
        seg = q - p
        seg_len = np.linalg.norm(seg)
        covered = 0.0
        for (a, b) in counts:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            da = seg[0] * (pa[1] - p[1]) - seg[1] * (pa[0] - p[0])
            db = seg[0] * (pb[1] - p[1]) - seg[1] * (pb[0] - p[0])
            if abs(da) > 1e-9 * seg_len or abs(db) > 1e-9 * seg_len:
                continue
            ta = np.dot(pa - p, seg) / seg_len**2
            tb = np.dot(pb - p, seg) / seg_len**2
            if -1e-12 <= min(ta, tb) and max(ta, tb) <= 1.0 + 1e-12:
                covered += abs(tb - ta) * seg_len
        assert abs(covered - seg_len) <= 1e-9
    # markers by an independent crossing-number containment check
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    for t in range(mesh.num_triangles):
        expect = 0 if ray_cast_inside(cent[t], fp) else -2
        assert mesh.markers[t] == expect


def test_min_angle_on_random_city():
    rng = np.random.default_rng(9)
    cm = random_clear_city(rng, 20, 120.0)
    mesh = generate_mesh2d(cm, cm.domain, 6.0)
    assert all_angles_deg(mesh).min() >= 20.0 - 1e-9


def test_max_edge_bound():
    rng = np.random.default_rng(13)
    cm = random_clear_city(rng, 5, 50.0)
    h = 3.5
    mesh = generate_mesh2d(cm, cm.domain, h)
    assert edge_lengths(mesh).max() <= h * (1.0 + 1e-9)


def test_marker_correctness_random():
    rng = np.random.default_rng(21)
    cm = random_clear_city(rng, 10, 80.0)
    mesh = generate_mesh2d(cm, cm.domain, 5.0)
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    rings = [b.footprint.vertices for b in cm.buildings]
    for t in range(mesh.num_triangles):
        expect = -2
        for b_idx, ring in enumerate(rings):
            if ray_cast_inside(cent[t], ring):
                expect = b_idx
                break
        assert mesh.markers[t] == expect


def test_refinement_scaling_empty_domain():
    for w, h in ((10.0, 1.0), (10.0, 0.5), (20.0, 2.0)):
        mesh = generate_mesh2d(empty_model(w, w), [[0, 0], [w, w]], h)
        expected = w * w / (h * h)
        assert expected / 4.0 <= mesh.num_triangles <= expected * 4.0


def test_constraint_intersection_raises():
    cm = make_city_model(
        [square(0.0, 0.0, 4.0), square(2.0, 2.0, 4.0)], [[-2, -2], [8, 8]]
    )
    with pytest.raises(ConstraintIntersection):
        generate_mesh2d(cm, [[-2, -2], [8, 8]], 2.0)


def test_delaunay_property_unconstrained():
    mesh = generate_mesh2d(empty_model(6.0, 6.0), [[0, 0], [6, 6]], 1.2)
    counts = edge_counts(mesh)
    tri_of_edge = {}
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            tri_of_edge[(a, b)] = t
    v = mesh.vertices
    scale4 = 1.2**4
    for (a, b), c in counts.items():
        if c != 2:
            continue
        t1 = tri_of_edge[(a, b)]
        t2 = tri_of_edge[(b, a)]
        other1 = [int(x) for x in mesh.triangles[t1] if x not in (a, b)][0]
        other2 = [int(x) for x in mesh.triangles[t2] if x not in (a, b)][0]
        A, B, C, D = v[a], v[b], v[other1], v[other2]
        m = np.array(
            [
                [A[0] - D[0], A[1] - D[1], (A - D) @ (A - D)],
                [B[0] - D[0], B[1] - D[1], (B - D) @ (B - D)],
                [C[0] - D[0], C[1] - D[1], (C - D) @ (C - D)],
            ]
        )
        e1 = v[b] - v[a]
        e2 = v[other1] - v[a]
        sign = np.sign(e1[0] * e2[1] - e1[1] * e2[0])
        assert sign * np.linalg.det(m) <= 1e-9 * scale4


def test_deterministic_output():
    rng = np.random.default_rng(33)
    cm = random_clear_city(rng, 7, 60.0)
    m1 = generate_mesh2d(cm, cm.domain, 4.0)
    m2 = generate_mesh2d(cm, cm.domain, 4.0)
    np.testing.assert_array_equal(m1.vertices, m2.vertices)
    np.testing.assert_array_equal(m1.triangles, m2.triangles)
    np.testing.assert_array_equal(m1.markers, m2.markers)


def test_quality_ratio_bound():
    rng = np.random.default_rng(41)
    cm = random_clear_city(rng, 4, 40.0)
    mesh = generate_mesh2d(cm, cm.domain, 3.0)
    v = mesh.vertices[mesh.triangles]
    ls = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2)
    area = triangle_areas(mesh)
    r = ls.prod(axis=1) / (4.0 * area)
    ratio = r / ls.min(axis=1)
    assert ratio.max() <= GOOD_RATIO * (1.0 + 1e-9)
