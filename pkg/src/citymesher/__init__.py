"""citymesher: LoD1.2 city models and conforming tet meshes from LiDAR + footprints."""

from citymesher.benchmark import BenchmarkResult, run_benchmark
from citymesher.citymodel import (
    Building,
    CityModel,
    clean_city_model,
    compute_all_heights,
    export_city_json,
    extract_building_points,
    import_city_json,
    load_footprints_geojson,
    make_city_model,
    merge_city_model,
    save_footprints_geojson,
)
from citymesher.errors import CityMesherError
from citymesher.exporters import write_obj, write_stl, write_vtk
from citymesher.geometry import (
    Polygon,
    clean_polygon,
    convex_hull,
    merge_polygons,
    minimum_clearance,
    point_in_polygon,
    polygon_distance,
)
from citymesher.mesh2d import Mesh2D, generate_mesh2d
from citymesher.mesh3d import (
    SurfaceMesh,
    VolumeMesh,
    extract_boundary,
    layer_mesh,
    mesh_quality_report,
    tet_volumes,
    trim_mesh,
)
from citymesher.pipeline import PipelineConfig, PipelineResult, run_pipeline
from citymesher.pointcloud import PointCloud, filter_by_class, read_las, write_las
from citymesher.smoothing import smooth_full, smooth_ground, solve_bvp
from citymesher.synthetic import SyntheticCity, generate_synthetic_city
from citymesher.terrain import GridField2D, build_dtm

__version__ = "0.1.0"

__all__ = [
    "BenchmarkResult",
    "Building",
    "CityMesherError",
    "CityModel",
    "GridField2D",
    "Mesh2D",
    "PipelineConfig",
    "PipelineResult",
    "PointCloud",
    "Polygon",
    "SurfaceMesh",
    "SyntheticCity",
    "VolumeMesh",
    "build_dtm",
    "clean_city_model",
    "clean_polygon",
    "compute_all_heights",
    "convex_hull",
    "export_city_json",
    "extract_boundary",
    "extract_building_points",
    "filter_by_class",
    "generate_mesh2d",
    "generate_synthetic_city",
    "import_city_json",
    "layer_mesh",
    "load_footprints_geojson",
    "make_city_model",
    "merge_city_model",
    "merge_polygons",
    "mesh_quality_report",
    "minimum_clearance",
    "point_in_polygon",
    "polygon_distance",
    "read_las",
    "run_benchmark",
    "run_pipeline",
    "save_footprints_geojson",
    "smooth_full",
    "smooth_ground",
    "solve_bvp",
    "tet_volumes",
    "trim_mesh",
    "write_las",
    "write_obj",
    "write_stl",
    "write_vtk",
]
