"""Digital terrain model: regular grid built from ground-classified points.

Grid nodes sit at ``origin + (i, j) * cell_size`` and cover the requested
domain. Each node averages the z of the points binned to it (nearest node,
half-up rounding in x then y); nodes without points are filled by a
multi-source BFS where each empty node takes the mean of its already-filled
4-neighbors at the step it is discovered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloud
from .pointcloud import PointCloud


@dataclass
class GridField2D:
    """Scalar field on a regular grid; values[j, i] is node (i, j)."""

    origin: np.ndarray  # (2,)
    cell_size: float
    values: np.ndarray  # (ny, nx)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2D array")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    def sample(self, p) -> float:
        """Bilinear interpolation at point p, clamped to the grid extent."""
        return float(self.sample_many(np.asarray(p, dtype=np.float64)[None, :])[0])

    def sample_many(self, points) -> np.ndarray:
        """Vectorized bilinear sampling with out-of-extent clamping."""
        pts = np.asarray(points, dtype=np.float64)
        u = (pts[:, 0] - self.origin[0]) / self.cell_size
        v = (pts[:, 1] - self.origin[1]) / self.cell_size
        u = np.clip(u, 0.0, self.nx - 1.0)
        v = np.clip(v, 0.0, self.ny - 1.0)
        i0 = np.minimum(u.astype(np.int64), self.nx - 2) if self.nx > 1 else np.zeros(len(u), dtype=np.int64)
        j0 = np.minimum(v.astype(np.int64), self.ny - 2) if self.ny > 1 else np.zeros(len(v), dtype=np.int64)
        i0 = np.maximum(i0, 0)
        j0 = np.maximum(j0, 0)
        fu = u - i0
        fv = v - j0
        i1 = np.minimum(i0 + 1, self.nx - 1)
        j1 = np.minimum(j0 + 1, self.ny - 1)
        z = self.values
        return (
            z[j0, i0] * (1 - fu) * (1 - fv)
            + z[j0, i1] * fu * (1 - fv)
            + z[j1, i0] * (1 - fu) * fv
            + z[j1, i1] * fu * fv
        )


def _flood_fill(values: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Level-by-level BFS fill; each empty node gets the mean of the filled
    4-neighbors present when its level is discovered."""
    values = values.copy()
    filled = filled.copy()
    while not filled.all():
        nb_sum = np.zeros_like(values)
        nb_cnt = np.zeros_like(values)
        fv = np.where(filled, values, 0.0)
        ff = filled.astype(np.float64)
        nb_sum[1:, :] += fv[:-1, :]
        nb_cnt[1:, :] += ff[:-1, :]
        nb_sum[:-1, :] += fv[1:, :]
        nb_cnt[:-1, :] += ff[1:, :]
        nb_sum[:, 1:] += fv[:, :-1]
        nb_cnt[:, 1:] += ff[:, :-1]
        nb_sum[:, :-1] += fv[:, 1:]
        nb_cnt[:, :-1] += ff[:, 1:]
        frontier = (~filled) & (nb_cnt > 0)
        if not frontier.any():
            break  # unreachable nodes (cannot happen on a connected grid)
        values[frontier] = nb_sum[frontier] / nb_cnt[frontier]
        filled |= frontier
    return values


def build_dtm(pc: PointCloud, bounds, cell_size: float = 1.0) -> GridField2D:
    """Build a DTM over the rectangular domain from (pre-filtered) ground points.

    Parameters
    ----------
    pc : PointCloud
        Ground points; classification filtering is the caller's business.
    bounds : array-like (2, 2)
        [[xmin, ymin], [xmax, ymax]] of the domain. The grid extends to the
        first node row/column at or beyond the max corner.
    cell_size : float
        Node spacing in meters.

    Raises
    ------
    EmptyCloud
        If no point bins to any grid node.
    """
    bounds = np.asarray(bounds, dtype=np.float64).reshape(2, 2)
    origin = bounds[0]
    width = bounds[1] - bounds[0]
    if (width < 0).any():
        raise ValueError("domain max corner below min corner")
    nx = int(math.ceil(width[0] / cell_size - 1e-12)) + 1
    ny = int(math.ceil(width[1] / cell_size - 1e-12)) + 1

    if len(pc) == 0:
        raise EmptyCloud("no points supplied for DTM")
    # nearest node, rounding half up in x then y
    i = np.floor((pc.points[:, 0] - origin[0]) / cell_size + 0.5).astype(np.int64)
    j = np.floor((pc.points[:, 1] - origin[1]) / cell_size + 0.5).astype(np.int64)
    ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
    if not ok.any():
        raise EmptyCloud("no points fall inside the DTM domain")
    i, j = i[ok], j[ok]
    z = pc.points[ok, 2]

    flat = j * nx + i
    sums = np.bincount(flat, weights=z, minlength=nx * ny)
    counts = np.bincount(flat, minlength=nx * ny)
    filled = (counts > 0).reshape(ny, nx)
    values = np.zeros(nx * ny)
    nz = counts > 0
    values[nz] = sums[nz] / counts[nz]
    values = _flood_fill(values.reshape(ny, nx), filled)
    return GridField2D(origin=origin, cell_size=float(cell_size), values=values)
