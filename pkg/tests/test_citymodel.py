"""City model tests: extraction vs a no-pruning sweep, percentile heights,
the binned merge vs a quadratic reference, and JSON round-trips."""

import json

import numpy as np
import pytest

from citymesher.citymodel import (
    Building,
    CityModel,
    clean_city_model,
    compute_building_heights,
    export_city_json,
    extract_building_points,
    import_city_json,
    load_footprints_geojson,
    make_city_model,
    merge_city_model,
    nearest_rank,
)
from citymesher.errors import MalformedJson, SchemaViolation
from citymesher.geometry import (
    clean_polygon,
    merge_polygons,
    points_in_polygon,
    polygon_area,
    polygon_distance,
    polygons_closer_than,
)
from citymesher.pointcloud import PointCloud
from citymesher.terrain import GridField2D


def square(x0, y0, s):
    return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], float)


def random_city_rings(rng, n, extent, smin=6.0, smax=20.0):
    rings = []
    for _ in range(n):
        s = rng.uniform(smin, smax)
        x0 = rng.uniform(0.0, extent - s)
        y0 = rng.uniform(0.0, extent - s)
        rings.append(square(x0, y0, s))
    return rings


# ------------------------------------------------------------- extraction


def seg_point_dist(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def brute_extract_fast(cm, pc, margin):
    """All-pairs reference with a plain per-edge distance loop."""
    roof_sets, ground_sets = [], []
    for b in cm.buildings:
        poly = b.footprint
        v = poly.vertices
        inside = points_in_polygon(pc.points[:, :2], poly)
        roof = inside & (pc.classification == 6)
        ground = np.zeros(len(pc), dtype=bool)
        cand = np.nonzero(~inside & np.isin(pc.classification, (2, 9)))[0]
        for i in cand:
            p = pc.points[i, :2]
            d = min(seg_point_dist(p, v[k], v[(k + 1) % len(v)]) for k in range(len(v)))
            ground[i] = d < margin
        roof_sets.append(pc.points[roof])
        ground_sets.append(pc.points[ground])
    return roof_sets, ground_sets


def test_extraction_matches_all_pairs_reference():
    rng = np.random.default_rng(11)
    rings = random_city_rings(rng, 12, 120.0)
    cm = make_city_model(rings, [[0, 0], [120, 120]])
    pts = np.column_stack(
        [rng.uniform(0, 120, 3000), rng.uniform(0, 120, 3000), rng.uniform(0, 30, 3000)]
    )
    cls = rng.choice(np.array([2, 6, 9, 1], dtype=np.uint8), size=3000)
    pc = PointCloud(pts, cls)
    got = extract_building_points(cm, pc, margin=1.0, filter_outliers=False)
    ref_roof, ref_ground = brute_extract_fast(cm, pc, 1.0)
    for k in range(len(cm)):
        np.testing.assert_array_equal(got.buildings[k].roof_points, ref_roof[k])
        np.testing.assert_array_equal(got.buildings[k].ground_points, ref_ground[k])


def test_extraction_classes_and_margin():
    cm = make_city_model([square(10, 10, 10)], [[0, 0], [40, 40]])
    pts = np.array(
        [
            [15.0, 15.0, 20.0],  # roof class inside
            [15.0, 15.0, 5.0],  # ground class inside: excluded
            [10.5, 9.5, 1.0],  # ground, 0.5 outside: kept
            [15.0, 8.95, 1.0],  # ground, 1.05 outside: dropped
            [15.0, 9.5, 1.0],  # water class near: kept
            [9.5, 15.0, 1.0],  # unclassified near: dropped
            [10.0, 10.0, 21.0],  # roof class on boundary: inside
        ]
    )
    cls = np.array([6, 2, 2, 2, 9, 1, 6], dtype=np.uint8)
    out = extract_building_points(cm, PointCloud(pts, cls), margin=1.0, filter_outliers=False)
    b = out.buildings[0]
    assert len(b.roof_points) == 2
    np.testing.assert_array_equal(np.sort(b.roof_points[:, 2]), [20.0, 21.0])
    assert len(b.ground_points) == 2
    np.testing.assert_array_equal(np.sort(b.ground_points[:, 0]), [10.5, 15.0])


def test_extraction_outlier_filter_applied():
    cm = make_city_model([square(0, 0, 10)], [[0, 0], [10, 10]])
    zs = np.full(50, 20.0)
    zs[0] = 120.0
    pts = np.column_stack([np.full(50, 5.0), np.full(50, 5.0), zs])
    pc = PointCloud(pts, np.full(50, 6, dtype=np.uint8))
    out = extract_building_points(cm, pc, filter_outliers=True)
    assert len(out.buildings[0].roof_points) == 49
    assert out.buildings[0].roof_points[:, 2].max() == 20.0


def test_extraction_empty_inputs():
    cm = make_city_model([], [[0, 0], [1, 1]])
    pc = PointCloud(np.empty((0, 3)), np.empty(0, dtype=np.uint8))
    out = extract_building_points(cm, pc)
    assert len(out) == 0
    cm2 = make_city_model([square(0, 0, 5)], [[0, 0], [5, 5]])
    out2 = extract_building_points(cm2, pc)
    assert len(out2.buildings[0].roof_points) == 0


# ---------------------------------------------------------------- heights


def test_nearest_rank_small_samples():
    assert nearest_rank(np.arange(1, 11), 10.0) == 1.0
    assert nearest_rank(np.arange(1, 11), 90.0) == 9.0
    assert nearest_rank(np.array([7.0]), 10.0) == 7.0
    assert nearest_rank(np.array([3.0, 1.0, 2.0]), 50.0) == 2.0
    # ceil(0.9 * 7) = 7 -> largest element
    assert nearest_rank(np.arange(7.0), 90.0) == 6.0


def test_heights_from_percentiles():
    rng = np.random.default_rng(3)
    ground_z = rng.permutation(np.arange(1.0, 101.0))
    roof_z = rng.permutation(np.arange(201.0, 301.0))
    b = Building(
        id="a",
        footprint=clean_polygon(square(0, 0, 10)),
        ground_points=np.column_stack([np.zeros(100), np.zeros(100), ground_z]),
        roof_points=np.column_stack([np.zeros(100), np.zeros(100), roof_z]),
    )
    out = compute_building_heights(b)
    assert out.h0 == 10.0
    assert out.h1 == 290.0
    assert out.flags == ()


def test_heights_dtm_fallback_and_no_roof():
    dtm = GridField2D(origin=np.zeros(2), cell_size=1.0, values=np.full((21, 21), 7.5))
    b = Building(id="a", footprint=clean_polygon(square(2, 2, 6)))
    out = compute_building_heights(b, dtm)
    assert out.h0 == 7.5
    assert out.h1 == 17.5
    assert "no_roof_points" in out.flags


def test_heights_min_clamp():
    b = Building(
        id="a",
        footprint=clean_polygon(square(0, 0, 5)),
        ground_points=np.array([[0, 0, 10.0], [0, 0, 10.0], [0, 0, 10.0]]),
        roof_points=np.array([[0, 0, 9.0], [0, 0, 9.0], [0, 0, 9.0]]),
    )
    out = compute_building_heights(b)
    assert out.h0 == 10.0
    assert out.h1 == 12.5
    assert "clamped_min_height" in out.flags


# ------------------------------------------------------------------ merge


def quadratic_merge(cm, eps, max_iter=3):
    """No-binning reference for the worklist merge: candidates are all
    alive buildings in ascending index order."""
    from collections import deque

    n = len(cm.buildings)
    polys = [b.footprint for b in cm.buildings]
    alive = [True] * n
    queue = deque(range(n))
    while queue:
        i = queue.popleft()
        if not alive[i]:
            continue
        for j in range(n):
            if j == i or not alive[j]:
                continue
            if polygons_closer_than(polys[i], polys[j], eps):
                polys[i] = merge_polygons(polys[i], polys[j], eps=eps, max_iter=max_iter)
                alive[j] = False
                queue.append(i)
    return [clean_polygon(polys[k].vertices) for k in range(n) if alive[k]]


def sym_diff_area(pa, pb):
    import shapely

    a = shapely.Polygon(pa.vertices)
    b = shapely.Polygon(pb.vertices)
    return a.symmetric_difference(b).area


def test_merge_two_near_squares():
    cm = make_city_model([square(0, 0, 10), square(10.5, 0, 10)], [[0, 0], [30, 10]])
    out = merge_city_model(cm, eps=1.0)
    assert len(out) == 1
    assert out.buildings[0].id == "b0"
    area = polygon_area(out.buildings[0].footprint)
    assert area >= 200.0
    assert area <= 215.0


def test_merge_respects_eps():
    cm = make_city_model([square(0, 0, 10), square(12, 0, 10)], [[0, 0], [30, 10]])
    out = merge_city_model(cm, eps=1.0)
    assert len(out) == 2


def test_merge_chain_collapses_transitively():
    rings = [square(11.0 * k, 0, 10) for k in range(5)]
    cm = make_city_model(rings, [[0, 0], [60, 10]])
    out = merge_city_model(cm, eps=1.5)
    assert len(out) == 1


def test_merge_conserves_roof_points():
    rng = np.random.default_rng(5)
    rings = [square(0, 0, 10), square(10.5, 0, 10), square(40, 0, 10)]
    buildings = []
    total = 0
    for k, ring in enumerate(rings):
        m = int(rng.integers(3, 9))
        total += m
        pts = np.column_stack([rng.uniform(0, 10, m), rng.uniform(0, 10, m), np.full(m, 20.0)])
        buildings.append(
            Building(id=f"b{k}", footprint=clean_polygon(ring), roof_points=pts,
                     ground_points=np.array([[0.0, 0.0, 1.0]]))
        )
    cm = CityModel(buildings=buildings, domain=np.array([[0, 0], [60, 10]]))
    out = merge_city_model(cm, eps=1.0)
    assert sum(len(b.roof_points) for b in out.buildings) == total


def test_merge_matches_quadratic_reference():
    rng = np.random.default_rng(17)
    for rep in range(6):
        rings = random_city_rings(rng, 30, 150.0)
        cm = make_city_model(rings, [[0, 0], [150, 150]])
        got = merge_city_model(cm, eps=1.0)
        ref = quadratic_merge(cm, eps=1.0)
        assert len(got) == len(ref)
        for b, rp in zip(got.buildings, ref):
            assert sym_diff_area(b.footprint, rp) < 1e-9


def test_merge_result_pairwise_separated():
    rng = np.random.default_rng(23)
    rings = random_city_rings(rng, 40, 160.0)
    cm = make_city_model(rings, [[0, 0], [160, 160]])
    out = merge_city_model(cm, eps=1.0)
    polys = [b.footprint for b in out.buildings]
    for a in range(len(polys)):
        for b in range(a + 1, len(polys)):
            assert polygon_distance(polys[a], polys[b]) >= 1.0 - 1e-12


def test_merge_empty_and_single():
    cm0 = make_city_model([], [[0, 0], [1, 1]])
    assert len(merge_city_model(cm0, 1.0)) == 0
    cm1 = make_city_model([square(0, 0, 8)], [[0, 0], [10, 10]])
    out = merge_city_model(cm1, 1.0)
    assert len(out) == 1
    np.testing.assert_allclose(out.buildings[0].footprint.vertices, square(0, 0, 8))


def test_clean_city_model_idempotent_after_merge():
    rng = np.random.default_rng(31)
    rings = random_city_rings(rng, 20, 100.0)
    cm = make_city_model(rings, [[0, 0], [100, 100]])
    merged = merge_city_model(cm, eps=1.0)
    cleaned = clean_city_model(merged)
    for a, b in zip(merged.buildings, cleaned.buildings):
        np.testing.assert_array_equal(a.footprint.vertices, b.footprint.vertices)


# ------------------------------------------------------------------- JSON


def make_sample_model():
    rng = np.random.default_rng(7)
    rings = random_city_rings(rng, 5, 80.0)
    cm = make_city_model(rings, [[0, 0], [80, 80]])
    for k, b in enumerate(cm.buildings):
        cm.buildings[k] = Building(
            id=b.id, footprint=b.footprint, h0=float(k), h1=float(k) + 9.25
        )
    return cm


def test_city_json_round_trip_bytes(tmp_path):
    cm = make_sample_model()
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    export_city_json(cm, p1)
    back = import_city_json(p1)
    export_city_json(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    for a, b in zip(cm.buildings, back.buildings):
        np.testing.assert_array_equal(a.footprint.vertices, b.footprint.vertices)
        assert a.h0 == b.h0 and a.h1 == b.h1 and a.id == b.id
    np.testing.assert_array_equal(cm.domain, back.domain)


def test_city_json_with_points_round_trip(tmp_path):
    cm = make_sample_model()
    rng = np.random.default_rng(9)
    cm.buildings[0] = Building(
        id="b0",
        footprint=cm.buildings[0].footprint,
        h0=1.0,
        h1=11.0,
        roof_points=rng.normal(size=(4, 3)),
        ground_points=rng.normal(size=(2, 3)),
    )
    p = tmp_path / "pts.json"
    export_city_json(cm, p, include_points=True)
    back = import_city_json(p)
    np.testing.assert_array_equal(back.buildings[0].roof_points, cm.buildings[0].roof_points)
    np.testing.assert_array_equal(back.buildings[0].ground_points, cm.buildings[0].ground_points)


def test_city_json_empty_model(tmp_path):
    cm = make_city_model([], [[0, 0], [5, 5]])
    p = tmp_path / "empty.json"
    export_city_json(cm, p)
    back = import_city_json(p)
    assert len(back) == 0
    np.testing.assert_array_equal(back.domain, cm.domain)


def test_city_json_malformed_raises(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MalformedJson):
        import_city_json(p)


def test_city_json_schema_violations(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"domain": {"min": [0, 0], "max": [1, 1]}}))
    with pytest.raises(SchemaViolation):
        import_city_json(p)
    p.write_text(json.dumps({"domain": {"min": [0, 0], "max": [1, 1]},
                             "buildings": [{"id": "x", "footprint": [[0, 0], [1, 0]], "h0": 0, "h1": 1}]}))
    with pytest.raises(SchemaViolation):
        import_city_json(p)
    p.write_text(json.dumps({"buildings": []}))
    with pytest.raises(SchemaViolation):
        import_city_json(p)


# ---------------------------------------------------------------- GeoJSON


def test_geojson_loading(tmp_path):
    ring = [[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]]
    fc = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"id": "house-1"},
             "geometry": {"type": "Polygon", "coordinates": [ring]}},
            {"type": "Feature", "properties": {},
             "geometry": {"type": "Polygon", "coordinates": [[[20, 0], [26, 0], [23, 5], [20, 0]]]}},
        ],
    }
    p = tmp_path / "fp.geojson"
    p.write_text(json.dumps(fc))
    rings, ids = load_footprints_geojson(p)
    assert ids == ["house-1", "b1"]
    assert rings[0].shape == (5, 2)
    cm = make_city_model(rings, [[0, 0], [30, 10]], ids)
    assert len(cm.buildings[0].footprint) == 4


def test_geojson_rejects_non_polygon(tmp_path):
    fc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {},
         "geometry": {"type": "Point", "coordinates": [0, 0]}}]}
    p = tmp_path / "pt.geojson"
    p.write_text(json.dumps(fc))
    with pytest.raises(SchemaViolation):
        load_footprints_geojson(p)
