"""Synthetic city generator for tests and benchmarks.

Produces n axis-aligned rectangular footprints randomly placed on a square
tile (overlaps permitted; the merge pass handles them) together with a
LiDAR-like point cloud: class-2 ground points sampled on a rolling analytic
terrain, minus the area under buildings, and class-6 roof points at each
building's assigned height. Placement redraws candidates that would leave a
sliver gap to an existing building: footprints either touch, in which case
merging fuses them, or keep at least a street width of clearance. Everything
is drawn from one seeded generator in a fixed order, so outputs are
reproducible per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pointcloud import PointCloud

SIDE_RANGE = (8.0, 40.0)
RELATIVE_HEIGHT_RANGE = (6.0, 24.0)
EDGE_MARGIN = 2.0
DEFAULT_AMPLITUDE = 2.0
# Broad gentle hills: a few meters of relief spread over a kilometer keeps
# the terrain change across any one footprint small against the mesh layer
# height, so neighboring buildings round to consistent trim layers.
DEFAULT_WAVELENGTH = 1200.0
# Buildings either overlap (the merge pass fuses them) or keep a street-width
# gap. A sliver gap between two distinct tall buildings squeezes the cells
# wedged between their columns when roof heights are adjusted.
MIN_CLEARANCE = 10.0
_PLACE_TRIES = 300


def terrain_height(points, amplitude: float = DEFAULT_AMPLITUDE, wavelength: float = DEFAULT_WAVELENGTH) -> np.ndarray:
    """Rolling analytic terrain: A sin(2 pi x / L) cos(2 pi y / L)."""
    xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    w = 2.0 * np.pi / wavelength
    return amplitude * np.sin(w * xy[:, 0]) * np.cos(w * xy[:, 1])


@dataclass
class SyntheticCity:
    """Generator output: footprints, assigned roof heights, point cloud.

    ``roof_counts[k]`` is the number of roof points emitted for building k;
    roof points follow the ground block in the cloud, in building order.
    """

    footprints: list
    heights: np.ndarray
    cloud: PointCloud
    tile: np.ndarray
    amplitude: float
    wavelength: float
    roof_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _rect_ring(x0, y0, w, h) -> np.ndarray:
    return np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]])


def generate_synthetic_city(
    n: int,
    tile,
    seed: int = 0,
    ground_spacing: float = 2.0,
    roof_spacing: float = 1.5,
    noise: float = 0.05,
    amplitude: float = DEFAULT_AMPLITUDE,
    wavelength: float = DEFAULT_WAVELENGTH,
    min_clearance: float = MIN_CLEARANCE,
) -> SyntheticCity:
    """Place n random rectangular buildings on the tile and synthesize LiDAR.

    Rectangle sides are uniform in [8, 40] m (clamped when the tile is
    smaller), positions uniform with a 2 m margin to the tile edge. A
    candidate position is redrawn while it sits between 0 and min_clearance
    away from an already placed rectangle, so buildings either overlap or
    keep a clear street between them; when a spot cannot be found the
    building is stacked inside an existing one. Each building gets an
    absolute roof height of terrain at its center plus a uniform [6, 24] m
    rise. Ground points sit on a jittered grid, excluding the interiors of
    footprints; roof points cover each footprint on a grid of at least
    2 x 2. Gaussian z-noise of the given sigma on both classes.
    """
    if n < 0:
        raise ValueError("building count must be >= 0")
    tile = np.asarray(tile, dtype=np.float64).reshape(2, 2)
    rng = np.random.default_rng(seed)
    extent = tile[1] - tile[0]
    avail = extent - 2.0 * EDGE_MARGIN
    if min(avail) <= 0:
        raise ValueError("tile too small for the edge margin")

    sides = rng.uniform(SIDE_RANGE[0], SIDE_RANGE[1], size=(n, 2))
    sides = np.minimum(sides, avail[None, :])
    rises = rng.uniform(RELATIVE_HEIGHT_RANGE[0], RELATIVE_HEIGHT_RANGE[1], size=n)

    lower = np.empty((n, 2))
    upper = np.empty((n, 2))
    for k in range(n):
        for _ in range(_PLACE_TRIES):
            frac = rng.uniform(0.0, 1.0, size=2)
            lo = tile[0] + EDGE_MARGIN + frac * (avail - sides[k])
            hi = lo + sides[k]
            if k:
                dx = np.maximum(0.0, np.maximum(lower[:k, 0] - hi[0], lo[0] - upper[:k, 0]))
                dy = np.maximum(0.0, np.maximum(lower[:k, 1] - hi[1], lo[1] - upper[:k, 1]))
                gap = np.hypot(dx, dy)
                if not np.all((gap == 0.0) | (gap >= min_clearance)):
                    continue
            lower[k] = lo
            upper[k] = hi
            break
        else:
            # Tile too crowded for the clearance rule: nest inside a placed
            # building, which keeps every gap either zero or unchanged.
            j = int(rng.integers(k)) if k else 0
            sides[k] = np.minimum(sides[k], upper[j] - lower[j])
            lower[k] = 0.5 * (lower[j] + upper[j]) - 0.5 * sides[k]
            upper[k] = lower[k] + sides[k]

    footprints = [_rect_ring(lower[k, 0], lower[k, 1], sides[k, 0], sides[k, 1]) for k in range(n)]
    centers = lower + 0.5 * sides
    heights = terrain_height(centers, amplitude, wavelength) + rises if n else np.zeros(0)

    gx = np.arange(tile[0, 0] + ground_spacing, tile[1, 0], ground_spacing)
    gy = np.arange(tile[0, 1] + ground_spacing, tile[1, 1], ground_spacing)
    xx, yy = np.meshgrid(gx, gy)
    ground_xy = np.column_stack([xx.ravel(), yy.ravel()])
    jitter = rng.uniform(-0.3 * ground_spacing, 0.3 * ground_spacing, size=ground_xy.shape)
    ground_xy = ground_xy + jitter
    keep = np.ones(len(ground_xy), dtype=bool)
    for k in range(n):
        ring = footprints[k]
        keep &= ~(
            (ground_xy[:, 0] > ring[0, 0])
            & (ground_xy[:, 0] < ring[1, 0])
            & (ground_xy[:, 1] > ring[0, 1])
            & (ground_xy[:, 1] < ring[2, 1])
        )
    ground_xy = ground_xy[keep]
    ground_z = terrain_height(ground_xy, amplitude, wavelength)
    if noise > 0:
        ground_z = ground_z + rng.normal(0.0, noise, size=len(ground_z))

    roof_blocks = []
    roof_counts = np.zeros(n, dtype=np.int64)
    for k in range(n):
        w, h = sides[k]
        nx = max(2, math.ceil(w / roof_spacing))
        ny = max(2, math.ceil(h / roof_spacing))
        rx = np.linspace(lower[k, 0] + 0.2, lower[k, 0] + w - 0.2, nx)
        ry = np.linspace(lower[k, 1] + 0.2, lower[k, 1] + h - 0.2, ny)
        rxx, ryy = np.meshgrid(rx, ry)
        xy = np.column_stack([rxx.ravel(), ryy.ravel()])
        z = np.full(len(xy), heights[k])
        if noise > 0:
            z = z + rng.normal(0.0, noise, size=len(z))
        roof_blocks.append(np.column_stack([xy, z]))
        roof_counts[k] = len(xy)

    ground = np.column_stack([ground_xy, ground_z])
    blocks = [ground] + roof_blocks if len(ground) else roof_blocks
    points = np.vstack(blocks) if blocks else np.empty((0, 3))
    classification = np.concatenate(
        [np.full(len(ground), 2, dtype=np.uint8)]
        + [np.full(c, 6, dtype=np.uint8) for c in roof_counts]
    )
    return SyntheticCity(
        footprints=footprints,
        heights=np.asarray(heights, dtype=np.float64),
        cloud=PointCloud(points, classification),
        tile=tile,
        amplitude=amplitude,
        wavelength=wavelength,
        roof_counts=roof_counts,
    )
