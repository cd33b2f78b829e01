"""LoD1.2 city model: buildings as footprint prisms, plus model-level passes.

A building couples a cleaned 2D footprint with the LiDAR points attributed
to it and the two prism heights: h0 (ground) and h1 (roof), both absolute.
Model passes: point extraction (broad-phase AABB collision + exact
containment), percentile height computation, the worklist footprint merge,
and JSON persistence.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aabb import AABBTree, boxes_from_points
from .errors import MalformedJson, SchemaViolation
from .geometry import (
    MERGE_MAX_ITER,
    Polygon,
    clean_polygon,
    merge_polygons,
    points_in_polygon,
    polygon_centroid,
    polygons_closer_than,
    _point_segment_distance_many,
)
from .pointcloud import GROUND_CLASSES, ROOF_CLASS, PointCloud, remove_z_outliers

DEFAULT_MIN_BUILDING_HEIGHT = 2.5
DEFAULT_BUILDING_HEIGHT = 10.0


def _empty_points() -> np.ndarray:
    return np.empty((0, 3))


@dataclass
class Building:
    """One building: footprint polygon, attributed points, prism heights."""

    id: str
    footprint: Polygon
    h0: float = 0.0
    h1: float = 0.0
    roof_points: np.ndarray = field(default_factory=_empty_points)
    ground_points: np.ndarray = field(default_factory=_empty_points)
    flags: tuple = ()

    def __post_init__(self):
        self.roof_points = np.asarray(self.roof_points, dtype=np.float64).reshape(-1, 3)
        self.ground_points = np.asarray(self.ground_points, dtype=np.float64).reshape(-1, 3)


@dataclass
class CityModel:
    buildings: list
    domain: np.ndarray  # [[xmin, ymin], [xmax, ymax]]

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=np.float64).reshape(2, 2)

    def __len__(self) -> int:
        return len(self.buildings)


def make_city_model(rings, domain, ids=None) -> CityModel:
    """Clean raw footprint rings into a CityModel."""
    buildings = []
    for k, ring in enumerate(rings):
        bid = ids[k] if ids is not None else f"b{k}"
        buildings.append(Building(id=bid, footprint=clean_polygon(ring)))
    return CityModel(buildings=buildings, domain=np.asarray(domain, dtype=np.float64))


# ------------------------------------------------------------- extraction


def extract_building_points(
    cm: CityModel, pc: PointCloud, margin: float = 1.0, filter_outliers: bool = True
) -> CityModel:
    """Attribute LiDAR points to buildings.

    Roof points: class 6 inside the footprint (boundary counts as inside).
    Ground points: class 2 or 9 outside the footprint but closer than
    ``margin`` to it. Candidates come from an AABB-tree vs AABB-tree
    collision between point boxes and margin-dilated footprint boxes; exact
    containment and distance filters run on candidates only. Each nonempty
    set is then passed through the 2-sigma z outlier filter.
    """
    n = len(cm.buildings)
    out = [replace(b, roof_points=_empty_points(), ground_points=_empty_points()) for b in cm.buildings]
    if n == 0 or len(pc) == 0:
        return CityModel(buildings=out, domain=cm.domain)

    fp_boxes = np.empty((n, 4))
    for k, b in enumerate(cm.buildings):
        fp_boxes[k] = b.footprint.bounds
    fp_boxes[:, :2] -= margin
    fp_boxes[:, 2:] += margin
    fp_tree = AABBTree(fp_boxes, leaf_size=4)
    pt_tree = AABBTree(boxes_from_points(pc.points[:, :2]), leaf_size=32)
    pt_idx, fp_idx = pt_tree.collide(fp_tree)

    cls = pc.classification
    order = np.argsort(fp_idx, kind="stable")
    pt_idx, fp_idx = pt_idx[order], fp_idx[order]
    bounds_split = np.searchsorted(fp_idx, np.arange(n + 1))
    for k in range(n):
        cand = pt_idx[bounds_split[k] : bounds_split[k + 1]]
        if len(cand) == 0:
            continue
        cand = np.sort(cand)
        poly = cm.buildings[k].footprint
        pts = pc.points[cand]
        inside = points_in_polygon(pts[:, :2], poly)
        roof_sel = inside & (cls[cand] == ROOF_CLASS)
        ground_cand = (~inside) & np.isin(cls[cand], GROUND_CLASSES)
        if ground_cand.any():
            gxy = pts[ground_cand, :2]
            v = poly.vertices
            d = _point_segment_distance_many(gxy, v, np.roll(v, -1, axis=0)).min(axis=1)
            near = d < margin
        else:
            near = np.empty(0, dtype=bool)
        roof = pts[roof_sel]
        ground = pts[ground_cand][near] if ground_cand.any() else _empty_points()
        if filter_outliers:
            if len(roof):
                roof = _z_filtered(roof)
            if len(ground):
                ground = _z_filtered(ground)
        out[k] = replace(out[k], roof_points=roof, ground_points=ground)
    return CityModel(buildings=out, domain=cm.domain)


def _z_filtered(points: np.ndarray) -> np.ndarray:
    pc = PointCloud(points, np.zeros(len(points), dtype=np.uint8))
    return remove_z_outliers(pc).points


# ---------------------------------------------------------------- heights


def nearest_rank(values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(p / 100.0 * n))
    return float(v[min(k, n) - 1])


def compute_building_heights(
    b: Building,
    dtm=None,
    min_building_height: float = DEFAULT_MIN_BUILDING_HEIGHT,
    default_building_height: float = DEFAULT_BUILDING_HEIGHT,
) -> Building:
    """Set h0/h1 from point percentiles with the documented fallbacks.

    h0 is the 10th percentile of ground z, or the DTM at the footprint
    centroid when no ground points were captured. h1 is the 90th percentile
    of roof z; with no roof points the building gets
    ``h0 + default_building_height`` and a flag. If h1 comes out at or below
    h0 it is clamped to ``h0 + min_building_height`` and flagged.
    """
    flags = []
    if len(b.ground_points):
        h0 = nearest_rank(b.ground_points[:, 2], 10.0)
    elif dtm is not None:
        h0 = dtm.sample(polygon_centroid(b.footprint))
    else:
        h0 = b.h0
        flags.append("no_ground_reference")
    if len(b.roof_points):
        h1 = nearest_rank(b.roof_points[:, 2], 90.0)
    else:
        h1 = h0 + default_building_height
        flags.append("no_roof_points")
    if h1 <= h0:
        h1 = h0 + min_building_height
        flags.append("clamped_min_height")
    return replace(b, h0=float(h0), h1=float(h1), flags=tuple(flags))


def compute_all_heights(cm: CityModel, dtm=None, **kw) -> CityModel:
    return CityModel(
        buildings=[compute_building_heights(b, dtm, **kw) for b in cm.buildings],
        domain=cm.domain,
    )


# ------------------------------------------------------------------ merge


def _bin_nodes(poly: Polygon, bin_size: float):
    """Integer lattice nodes inside the footprint bbox dilated by bin_size.

    The dilated-box (Chebyshev) rule makes the completeness claim exact:
    two footprints closer than eps always share a node when bin_size >= eps.
    """
    b = poly.bounds
    i0 = math.ceil((b[0] - bin_size) / bin_size)
    i1 = math.floor((b[2] + bin_size) / bin_size)
    j0 = math.ceil((b[1] - bin_size) / bin_size)
    j1 = math.floor((b[3] + bin_size) / bin_size)
    return [(i, j) for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)]


def merge_footprints(cm: CityModel, eps: float = 1.0, max_iter: int = MERGE_MAX_ITER) -> CityModel:
    """Worklist merge of footprints closer than eps (bin-accelerated).

    Pops building i from a FIFO queue, gathers candidates sharing a grid bin,
    and for each candidate j closer than eps merges its footprint into i,
    re-pushes i, recomputes i's bins and empties j. Terminates because every
    merge strictly decreases the building count. Merged buildings concatenate
    their roof and ground point sets. Heights are left untouched; callers
    recompute them afterwards.
    """
    n = len(cm.buildings)
    if n == 0:
        return CityModel(buildings=[], domain=cm.domain)
    polys = [b.footprint for b in cm.buildings]
    roof = [b.roof_points for b in cm.buildings]
    ground = [b.ground_points for b in cm.buildings]
    alive = [True] * n

    diam = [float(np.hypot(p.bounds[2] - p.bounds[0], p.bounds[3] - p.bounds[1])) for p in polys]
    bin_size = max(4.0 * float(np.mean(diam)), 2.0 * eps)

    node_map: dict = {}
    membership: list = [None] * n
    for k in range(n):
        nodes = _bin_nodes(polys[k], bin_size)
        membership[k] = nodes
        for nd in nodes:
            node_map.setdefault(nd, set()).add(k)

    def drop_bins(k):
        for nd in membership[k]:
            node_map[nd].discard(k)
        membership[k] = []

    def refresh_bins(k):
        drop_bins(k)
        nodes = _bin_nodes(polys[k], bin_size)
        membership[k] = nodes
        for nd in nodes:
            node_map.setdefault(nd, set()).add(k)

    queue = deque(range(n))
    while queue:
        i = queue.popleft()
        if not alive[i]:
            continue
        cand = set()
        for nd in membership[i]:
            cand |= node_map.get(nd, set())
        cand.discard(i)
        for j in sorted(cand):
            if not alive[j]:
                continue
            if polygons_closer_than(polys[i], polys[j], eps):
                polys[i] = merge_polygons(polys[i], polys[j], eps=eps, max_iter=max_iter)
                roof[i] = np.vstack([roof[i], roof[j]])
                ground[i] = np.vstack([ground[i], ground[j]])
                alive[j] = False
                drop_bins(j)
                queue.append(i)
                refresh_bins(i)

    merged = []
    for k in range(n):
        if not alive[k]:
            continue
        b = cm.buildings[k]
        merged.append(
            replace(
                b,
                footprint=clean_polygon(polys[k].vertices),
                roof_points=roof[k],
                ground_points=ground[k],
            )
        )
    return CityModel(buildings=merged, domain=cm.domain)


def merge_city_model(
    cm: CityModel,
    eps: float = 1.0,
    max_iter: int = MERGE_MAX_ITER,
    dtm=None,
    **height_kw,
) -> CityModel:
    """Merge footprints, re-clean, and recompute heights in one pass."""
    out = clean_city_model(merge_footprints(cm, eps, max_iter))
    return compute_all_heights(out, dtm, **height_kw)


def clean_city_model(cm: CityModel) -> CityModel:
    """Re-clean every footprint (idempotent after merge)."""
    return CityModel(
        buildings=[replace(b, footprint=clean_polygon(b.footprint.vertices)) for b in cm.buildings],
        domain=cm.domain,
    )


# ------------------------------------------------------------------- JSON


def export_city_json(cm: CityModel, path, include_points: bool = False) -> None:
    """Write the city model JSON (schema in README); deterministic bytes."""
    obj = {
        "domain": {
            "min": [float(cm.domain[0, 0]), float(cm.domain[0, 1])],
            "max": [float(cm.domain[1, 0]), float(cm.domain[1, 1])],
        },
        "buildings": [],
    }
    for b in cm.buildings:
        entry = {
            "id": b.id,
            "footprint": [[float(x), float(y)] for x, y in b.footprint.vertices],
            "h0": float(b.h0),
            "h1": float(b.h1),
        }
        if include_points:
            entry["roof_points"] = [[float(c) for c in p] for p in b.roof_points]
            entry["ground_points"] = [[float(c) for c in p] for p in b.ground_points]
        obj["buildings"].append(entry)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _require(cond, msg):
    if not cond:
        raise SchemaViolation(msg)


def import_city_json(path) -> CityModel:
    """Read a city model JSON; lossless for footprints, heights, ids, domain."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    _require(isinstance(obj, dict), "top level must be an object")
    _require("domain" in obj, "missing 'domain'")
    _require("buildings" in obj, "missing 'buildings'")
    dom = obj["domain"]
    _require(isinstance(dom, dict) and "min" in dom and "max" in dom, "domain needs min/max")
    _require(
        isinstance(dom["min"], list) and len(dom["min"]) == 2
        and isinstance(dom["max"], list) and len(dom["max"]) == 2,
        "domain min/max must be [x, y]",
    )
    domain = np.array([dom["min"], dom["max"]], dtype=np.float64)
    _require(isinstance(obj["buildings"], list), "'buildings' must be a list")
    buildings = []
    for k, entry in enumerate(obj["buildings"]):
        _require(isinstance(entry, dict), f"building {k} must be an object")
        for key in ("id", "footprint", "h0", "h1"):
            _require(key in entry, f"building {k} missing '{key}'")
        ring = entry["footprint"]
        _require(
            isinstance(ring, list) and len(ring) >= 3
            and all(isinstance(v, list) and len(v) == 2 for v in ring),
            f"building {k} footprint must be a list of [x, y]",
        )
        _require(isinstance(entry["h0"], (int, float)), f"building {k} h0 must be a number")
        _require(isinstance(entry["h1"], (int, float)), f"building {k} h1 must be a number")
        b = Building(
            id=str(entry["id"]),
            footprint=Polygon(np.array(ring, dtype=np.float64)),
            h0=float(entry["h0"]),
            h1=float(entry["h1"]),
            roof_points=np.array(entry.get("roof_points", []), dtype=np.float64).reshape(-1, 3),
            ground_points=np.array(entry.get("ground_points", []), dtype=np.float64).reshape(-1, 3),
        )
        buildings.append(b)
    return CityModel(buildings=buildings, domain=domain)


# ---------------------------------------------------------------- GeoJSON


def save_footprints_geojson(rings, path, ids=None) -> None:
    """Write rings as a GeoJSON FeatureCollection of Polygons (closed rings)."""
    features = []
    for k, ring in enumerate(rings):
        ring = np.asarray(ring, dtype=np.float64)
        coords = [[float(x), float(y)] for x, y in ring]
        coords.append(coords[0])
        features.append(
            {
                "type": "Feature",
                "properties": {"id": str(ids[k]) if ids is not None else f"b{k}"},
                "geometry": {"type": "Polygon", "coordinates": [coords]},
            }
        )
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=2)
        fh.write("\n")


def load_footprints_geojson(path):
    """Outer rings and ids from a GeoJSON FeatureCollection of Polygons."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    _require(isinstance(obj, dict) and obj.get("type") == "FeatureCollection", "expected a FeatureCollection")
    _require(isinstance(obj.get("features"), list), "missing 'features' list")
    rings, ids = [], []
    for k, feat in enumerate(obj["features"]):
        _require(isinstance(feat, dict) and feat.get("type") == "Feature", f"feature {k} malformed")
        geom = feat.get("geometry")
        _require(isinstance(geom, dict), f"feature {k} missing geometry")
        _require(geom.get("type") == "Polygon", f"feature {k}: only Polygon geometries supported")
        coords = geom.get("coordinates")
        _require(isinstance(coords, list) and len(coords) >= 1, f"feature {k}: empty coordinates")
        ring = np.array(coords[0], dtype=np.float64)
        _require(ring.ndim == 2 and ring.shape[1] >= 2, f"feature {k}: bad ring shape")
        ring = ring[:, :2]
        props = feat.get("properties") or {}
        fid = props.get("id", feat.get("id", f"b{k}"))
        rings.append(ring)
        ids.append(str(fid))
    return rings, ids
