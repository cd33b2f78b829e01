"""End-to-end meshing pipeline.

Stage 1 builds the city model from a point cloud and raw footprints
(read, DTM, clean, point extraction, heights). Stage 2 simplifies it
(merge, re-clean, re-heights). Stage 3 meshes it (2D mesh, layering,
ground smoothing, trimming, full smoothing) and exports. Wall-clock
timings are recorded for the simplification and meshing substeps only;
reading and DTM construction are preprocessing.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .citymodel import (
    clean_city_model,
    compute_all_heights,
    export_city_json,
    extract_building_points,
    load_footprints_geojson,
    make_city_model,
    merge_footprints,
)
from .errors import SchemaViolation, StepError
from .exporters import write_obj, write_stl, write_vtk
from .mesh2d import generate_mesh2d
from .mesh3d import extract_boundary, layer_mesh, trim_mesh
from .pointcloud import GROUND_CLASSES, concat_clouds, filter_by_class, read_las
from .smoothing import smooth_full, smooth_ground
from .terrain import build_dtm

TIMED_STEPS = ("2.1", "2.2", "2.3", "3.1", "3.2", "3.3", "3.4", "3.5")

_SURFACE_FORMATS = ("obj", "stl", "both")


@dataclass
class PipelineConfig:
    """Run configuration; JSON-loadable with CLI flags winning over the file."""

    domain: object = None  # [[xmin, ymin], [xmax, ymax]] or None to derive
    dtm_cell_size: float = 1.0
    ground_margin: float = 1.0
    merge_eps: float = 1.0
    merge_max_iter: int = 3
    mesh_size: float = 4.0
    domain_height: float = 50.0
    min_building_height: float = 2.5
    default_building_height: float = 10.0
    solver_tol: float = 1e-10
    footprints_path: object = None
    las_paths: tuple = ()
    output_dir: object = None
    surface_format: str = "obj"

    def validate(self) -> None:
        positive = (
            "dtm_cell_size",
            "ground_margin",
            "merge_eps",
            "mesh_size",
            "domain_height",
            "min_building_height",
            "default_building_height",
            "solver_tol",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if int(self.merge_max_iter) < 1:
            raise ValueError("merge_max_iter must be >= 1")
        if self.surface_format not in _SURFACE_FORMATS:
            raise ValueError(f"surface_format must be one of {_SURFACE_FORMATS}")
        if self.domain is not None:
            dom = np.asarray(self.domain, dtype=np.float64)
            if dom.shape != (2, 2):
                raise ValueError("domain must be [[xmin, ymin], [xmax, ymax]]")
            if not (dom[1] > dom[0]).all():
                raise ValueError("domain max corner must exceed min corner")

    @classmethod
    def from_json(cls, path, **overrides) -> "PipelineConfig":
        """Load a config file; keyword overrides (CLI flags) win.

        Relative paths inside the file resolve against the file's directory;
        override paths are taken as given.
        """
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise SchemaViolation("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SchemaViolation(f"unknown config keys: {sorted(unknown)}")
        base = path.parent

        def resolve(p):
            p = Path(p)
            return str(p if p.is_absolute() else base / p)

        if obj.get("footprints_path"):
            obj["footprints_path"] = resolve(obj["footprints_path"])
        if obj.get("las_paths"):
            obj["las_paths"] = tuple(resolve(p) for p in obj["las_paths"])
        if obj.get("output_dir"):
            obj["output_dir"] = resolve(obj["output_dir"])
        obj.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**obj)


@dataclass
class TimingReport:
    """Per-step wall-clock seconds plus output size counters."""

    seconds: dict
    num_buildings: int
    num_triangles_2d: int
    num_vertices: int
    num_cells: int
    num_surface_triangles: int

    def __post_init__(self):
        if set(self.seconds) != set(TIMED_STEPS):
            raise ValueError(f"timed steps must be exactly {TIMED_STEPS}")
        if any(t < 0 for t in self.seconds.values()):
            raise ValueError("negative step time")

    def as_dict(self) -> dict:
        return {
            "steps_seconds": {k: self.seconds[k] for k in TIMED_STEPS},
            "num_buildings": self.num_buildings,
            "num_triangles_2d": self.num_triangles_2d,
            "num_vertices": self.num_vertices,
            "num_cells": self.num_cells,
            "num_surface_triangles": self.num_surface_triangles,
        }


@dataclass
class PipelineResult:
    city: object
    mesh2d: object
    volume: object
    surface: object
    dtm: object
    report: TimingReport
    outputs: dict = field(default_factory=dict)


def _step(step, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StepError:
        raise
    except Exception as exc:
        raise StepError(step, exc) from exc


def _domain_bounds(config, rings, pc) -> np.ndarray:
    if config.domain is not None:
        return np.asarray(config.domain, dtype=np.float64).reshape(2, 2)
    lo = pc.points[:, :2].min(axis=0)
    hi = pc.points[:, :2].max(axis=0)
    for ring in rings:
        ring = np.asarray(ring, dtype=np.float64)
        lo = np.minimum(lo, ring.min(axis=0) - config.ground_margin)
        hi = np.maximum(hi, ring.max(axis=0) + config.ground_margin)
    return np.array([lo, hi])


def run_pipeline(config: PipelineConfig, footprints=None, ids=None, cloud=None) -> PipelineResult:
    """Execute the full pipeline and return all intermediate products.

    ``footprints`` (list of rings), ``ids`` and ``cloud`` bypass file
    reading when given; otherwise inputs come from the config paths.
    Outputs are written only when ``config.output_dir`` is set. Mesh files
    are byte-identical across reruns on identical inputs.
    """
    config.validate()
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    seconds = {}

    def timed(step, fn, *args, **kw):
        t0 = time.perf_counter()
        out = _step(step, fn, *args, **kw)
        seconds[step] = time.perf_counter() - t0
        return out

    def _load_cloud():
        if cloud is not None:
            return cloud
        if not config.las_paths:
            raise ValueError("no point cloud: pass cloud= or set las_paths")
        return concat_clouds([read_las(p) for p in config.las_paths])

    def _load_footprints():
        if footprints is not None:
            return list(footprints), (list(ids) if ids is not None else None)
        if config.footprints_path is None:
            return [], None
        return load_footprints_geojson(config.footprints_path)

    pc = _step("1.1", _load_cloud)
    rings, ring_ids = _step("1.2", _load_footprints)
    domain = _domain_bounds(config, rings, pc)

    def _make_dtm():
        return build_dtm(filter_by_class(pc, GROUND_CLASSES), domain, config.dtm_cell_size)

    dtm = _step("1.3", _make_dtm)
    cm = _step("1.4", make_city_model, rings, domain, ring_ids)
    cm = _step("1.5", extract_building_points, cm, pc, margin=config.ground_margin)
    height_kw = {
        "min_building_height": config.min_building_height,
        "default_building_height": config.default_building_height,
    }
    cm = _step("1.6", compute_all_heights, cm, dtm, **height_kw)
    if out_dir is not None:
        p = out_dir / "city_model_step1.json"
        _step("1.7", export_city_json, cm, p)
        outputs["city_model_step1"] = p

    cm = timed("2.1", merge_footprints, cm, config.merge_eps, int(config.merge_max_iter))
    cm = timed("2.2", clean_city_model, cm)
    cm = timed("2.3", compute_all_heights, cm, dtm, **height_kw)
    if out_dir is not None:
        p = out_dir / "city_model.json"
        _step("2.4", export_city_json, cm, p)
        outputs["city_model"] = p

    m2 = timed("3.1", generate_mesh2d, cm, domain, config.mesh_size)
    vm = timed("3.2", layer_mesh, m2, config.domain_height, config.mesh_size)
    vm = timed("3.3", smooth_ground, vm, dtm, config.solver_tol)
    vm = timed("3.4", trim_mesh, vm, cm, dtm)
    bh = {k: cm.buildings[k].h1 for k in range(len(cm.buildings))}
    vm = timed("3.5", smooth_full, vm, dtm, bh, config.solver_tol)

    surface = _step("3.6", extract_boundary, vm)
    if out_dir is not None:
        p = out_dir / "volume.vtk"
        _step("3.6", write_vtk, vm, p)
        outputs["volume"] = p
        if config.surface_format in ("obj", "both"):
            p = out_dir / "surface.obj"
            _step("3.6", write_obj, surface, p)
            outputs["surface_obj"] = p
        if config.surface_format in ("stl", "both"):
            p = out_dir / "surface.stl"
            _step("3.6", write_stl, surface, p)
            outputs["surface_stl"] = p

    report = TimingReport(
        seconds=seconds,
        num_buildings=len(cm.buildings),
        num_triangles_2d=m2.num_triangles,
        num_vertices=vm.num_vertices,
        num_cells=vm.num_cells,
        num_surface_triangles=surface.num_triangles,
    )
    if out_dir is not None:
        p = out_dir / "processing_report.json"
        p.write_text(json.dumps(report.as_dict(), indent=2) + "\n")
        outputs["report"] = p
    return PipelineResult(
        city=cm, mesh2d=m2, volume=vm, surface=surface, dtm=dtm, report=report, outputs=outputs
    )
