"""Command line interface.

Subcommands: ``build`` runs the meshing pipeline on a config plus optional
flag overrides, ``synth`` generates a synthetic city to disk, ``bench``
runs a benchmark suite and writes the timing CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benchmark import run_benchmark
from .citymodel import save_footprints_geojson
from .errors import CityMesherError
from .pipeline import PipelineConfig, run_pipeline
from .pointcloud import write_las
from .synthetic import generate_synthetic_city


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citymesher", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="run the meshing pipeline")
    b.add_argument("--config", help="JSON config file")
    b.add_argument("--footprints", help="GeoJSON footprint file (overrides config)")
    b.add_argument("--las", nargs="+", help="LAS point cloud files (override config)")
    b.add_argument("--out", help="output directory")
    b.add_argument("--mesh-size", type=float)
    b.add_argument("--domain-height", type=float)
    b.add_argument("--merge-eps", type=float)
    b.add_argument("--dtm-cell-size", type=float)
    b.add_argument("--ground-margin", type=float)
    b.add_argument("--solver-tol", type=float)
    b.add_argument("--surface-format", choices=["obj", "stl", "both"])

    s = sub.add_parser("synth", help="generate a synthetic city")
    s.add_argument("--n", type=int, required=True, help="building count")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--tile-size", type=float, default=400.0)

    n = sub.add_parser("bench", help="run a benchmark suite")
    n.add_argument("--suite", choices=["resolution", "buildings"], required=True)
    n.add_argument("--out", default="results.csv", help="CSV output path")
    n.add_argument("--sizes", help="comma-separated mesh sizes (resolution suite)")
    n.add_argument("--counts", help="comma-separated building counts (buildings suite)")
    n.add_argument("--n-buildings", type=int, default=200)
    n.add_argument("--tile-size", type=float, default=600.0)
    n.add_argument("--mesh-size", type=float, default=10.0)
    n.add_argument("--domain-height", type=float, default=50.0)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--repeats", type=int, default=1, help="timing repeats, fastest kept")
    return parser


def _cmd_build(args) -> int:
    overrides = {
        "footprints_path": args.footprints,
        "las_paths": tuple(args.las) if args.las else None,
        "output_dir": args.out,
        "mesh_size": args.mesh_size,
        "domain_height": args.domain_height,
        "merge_eps": args.merge_eps,
        "dtm_cell_size": args.dtm_cell_size,
        "ground_margin": args.ground_margin,
        "solver_tol": args.solver_tol,
        "surface_format": args.surface_format,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        cfg = PipelineConfig.from_json(args.config, **overrides)
    else:
        cfg = PipelineConfig(**overrides)
    result = run_pipeline(cfg)
    r = result.report
    print(
        f"meshed {r.num_buildings} buildings: {r.num_cells} cells, "
        f"{r.num_vertices} vertices, {r.num_surface_triangles} surface triangles"
    )
    for name, path in sorted(result.outputs.items()):
        print(f"  {name}: {path}")
    return 0


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tile = [[0.0, 0.0], [args.tile_size, args.tile_size]]
    city = generate_synthetic_city(args.n, tile, seed=args.seed)
    save_footprints_geojson(city.footprints, out / "footprints.geojson")
    write_las(city.cloud, out / "points.las")
    config = {
        "domain": tile,
        "mesh_size": 8.0,
        "domain_height": 48.0,
        "footprints_path": "footprints.geojson",
        "las_paths": ["points.las"],
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {args.n} buildings and {len(city.cloud)} points to {out}")
    return 0


def _cmd_bench(args) -> int:
    sizes = tuple(float(s) for s in args.sizes.split(",")) if args.sizes else None
    counts = tuple(int(c) for c in args.counts.split(",")) if args.counts else None
    result = run_benchmark(
        args.suite,
        sizes=sizes,
        counts=counts,
        n_buildings=args.n_buildings,
        tile_size=args.tile_size,
        mesh_size=args.mesh_size,
        domain_height=args.domain_height,
        seed=args.seed,
        repeats=args.repeats,
        csv_path=args.out,
    )
    print(f"{args.suite} suite: {len(result.rows)} rows -> {args.out}")
    for step in sorted(result.slopes):
        print(f"  step {step}: slope {result.slopes[step]:+.3f}")
    if result.suite == "buildings" and result.dense_slope_merge == result.dense_slope_merge:
        print(f"  step 2.1 dense-end slope: {result.dense_slope_merge:+.3f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "build":
            return _cmd_build(args)
        if args.command == "synth":
            return _cmd_synth(args)
        return _cmd_bench(args)
    except (CityMesherError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
