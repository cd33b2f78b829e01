"""Regenerate the bundled 4-building toy fixture under tests/fixtures/toy.

The fixture is deterministic: a planar terrain sampled on an integer grid
with no noise, four separated rectangular buildings with known roof
heights, and a config that meshes the 60 x 60 m domain. Run from the
repository root:

    python3 scripts/make_toy_fixture.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from citymesher.citymodel import save_footprints_geojson
from citymesher.pointcloud import PointCloud, write_las

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "toy"

DOMAIN = [[0.0, 0.0], [60.0, 60.0]]
BUILDINGS = [
    # (x0, y0, x1, y1, absolute roof height)
    (8.0, 8.0, 20.0, 18.0, 12.0),
    (30.0, 10.0, 42.0, 22.0, 18.0),
    (10.0, 32.0, 24.0, 44.0, 9.0),
    (34.0, 34.0, 50.0, 48.0, 15.0),
]


def terrain(x, y):
    return 2.0 + 0.03 * x + 0.02 * y


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    rings = []
    for x0, y0, x1, y1, _ in BUILDINGS:
        rings.append(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))
    ids = [f"toy{k}" for k in range(len(rings))]
    save_footprints_geojson(rings, OUT / "footprints.geojson", ids=ids)

    # ground: integer grid, skipping points under buildings
    gx, gy = np.meshgrid(np.arange(0.0, 61.0), np.arange(0.0, 61.0))
    gxy = np.column_stack([gx.ravel(), gy.ravel()])
    keep = np.ones(len(gxy), dtype=bool)
    for x0, y0, x1, y1, _ in BUILDINGS:
        keep &= ~((gxy[:, 0] > x0) & (gxy[:, 0] < x1) & (gxy[:, 1] > y0) & (gxy[:, 1] < y1))
    gxy = gxy[keep]
    ground = np.column_stack([gxy, terrain(gxy[:, 0], gxy[:, 1])])

    roofs = []
    for x0, y0, x1, y1, h1 in BUILDINGS:
        rx = np.arange(x0 + 0.5, x1, 1.0)
        ry = np.arange(y0 + 0.5, y1, 1.0)
        rxx, ryy = np.meshgrid(rx, ry)
        xy = np.column_stack([rxx.ravel(), ryy.ravel()])
        roofs.append(np.column_stack([xy, np.full(len(xy), h1)]))
    roofs = np.vstack(roofs)

    points = np.vstack([ground, roofs])
    classification = np.concatenate(
        [np.full(len(ground), 2, dtype=np.uint8), np.full(len(roofs), 6, dtype=np.uint8)]
    )
    write_las(PointCloud(points, classification), OUT / "points.las")

    config = {
        "domain": DOMAIN,
        "mesh_size": 4.0,
        "domain_height": 32.0,
        "footprints_path": "footprints.geojson",
        "las_paths": ["points.las"],
    }
    (OUT / "config.json").write_text(json.dumps(config, indent=2) + "\n")

    meta = {
        "heights": {ids[k]: BUILDINGS[k][4] for k in range(len(BUILDINGS))},
        "terrain": "2.0 + 0.03 x + 0.02 y",
    }
    (OUT / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote toy fixture to {OUT}")


if __name__ == "__main__":
    main()
