"""LAS point cloud reading, writing and classification filters.

Supports uncompressed LAS 1.2-1.4, point record formats 0-3, little-endian
per the ASPRS specification. Coordinates are reconstructed as
``record * scale + offset``. LAZ (compressed) payloads are rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, EmptyCloud, TruncatedFile, UnsupportedPointFormat

GROUND_CLASSES = (2, 9)  # ground and water
ROOF_CLASS = 6

_POINT_RECORD_MIN_SIZE = {0: 20, 1: 28, 2: 26, 3: 34}


@dataclass
class PointCloud:
    """Points (n, 3) float64 plus per-point ASPRS classification codes."""

    points: np.ndarray
    classification: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.classification = np.asarray(self.classification, dtype=np.uint8).reshape(-1)
        if len(self.points) != len(self.classification):
            raise ValueError("points and classification lengths differ")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) corners; raises EmptyCloud when there are no points."""
        if len(self.points) == 0:
            raise EmptyCloud("no points")
        return self.points.min(axis=0), self.points.max(axis=0)


def concat_clouds(clouds) -> PointCloud:
    clouds = list(clouds)
    if not clouds:
        return PointCloud(np.empty((0, 3)), np.empty(0, dtype=np.uint8))
    return PointCloud(
        np.vstack([c.points for c in clouds]),
        np.concatenate([c.classification for c in clouds]),
    )


def read_las(path) -> PointCloud:
    """Read an uncompressed LAS 1.2-1.4 file (point formats 0-3).

    Raises
    ------
    BadMagic
        File does not begin with the "LASF" signature.
    UnsupportedPointFormat
        Point record format above 3, or the LAZ compression bit is set.
    TruncatedFile
        Payload shorter than the declared record count requires.
    """
    data = Path(path).read_bytes()
    if len(data) < 227:
        if data[:4] != b"LASF":
            raise BadMagic(f"not a LAS file: {path}")
        raise TruncatedFile(f"header shorter than 227 bytes: {path}")
    if data[:4] != b"LASF":
        raise BadMagic(f"not a LAS file: {path}")

    ver_major, ver_minor = data[24], data[25]
    offset_to_points = struct.unpack_from("<I", data, 96)[0]
    point_format = data[104]
    record_length = struct.unpack_from("<H", data, 105)[0]
    n_legacy = struct.unpack_from("<I", data, 107)[0]
    sx, sy, sz = struct.unpack_from("<3d", data, 131)
    ox, oy, oz = struct.unpack_from("<3d", data, 155)

    if point_format & 0x80:
        raise UnsupportedPointFormat("compressed LAZ payload")
    if point_format > 3:
        raise UnsupportedPointFormat(f"point record format {point_format}")
    if record_length < _POINT_RECORD_MIN_SIZE[point_format]:
        raise TruncatedFile(
            f"record length {record_length} below format-{point_format} minimum"
        )

    n_points = n_legacy
    if (ver_major, ver_minor) >= (1, 4) and n_legacy == 0:
        if len(data) < 255:
            raise TruncatedFile(f"LAS 1.4 header shorter than 255 bytes: {path}")
        n_points = struct.unpack_from("<Q", data, 247)[0]

    need = offset_to_points + n_points * record_length
    if len(data) < need:
        raise TruncatedFile(
            f"{path}: expected {need} bytes for {n_points} records, file has {len(data)}"
        )

    dt = np.dtype(
        {
            "names": ["X", "Y", "Z", "classification"],
            "formats": ["<i4", "<i4", "<i4", "u1"],
            "offsets": [0, 4, 8, 15],
            "itemsize": record_length,
        }
    )
    raw = np.frombuffer(data, dtype=dt, count=n_points, offset=offset_to_points)
    pts = np.empty((n_points, 3), dtype=np.float64)
    pts[:, 0] = raw["X"] * sx + ox
    pts[:, 1] = raw["Y"] * sy + oy
    pts[:, 2] = raw["Z"] * sz + oz
    return PointCloud(pts, raw["classification"].copy())


def write_las(pc: PointCloud, path, scale=(1e-3, 1e-3, 1e-3)) -> None:
    """Write a LAS 1.2, point-format-0 file.

    Coordinates are quantized to the given scale (1 mm by default) with the
    cloud minimum as offset, so a read-back reproduces each coordinate to
    within one scale quantum.
    """
    n = len(pc)
    scale = np.asarray(scale, dtype=np.float64)
    offset = pc.points.min(axis=0) if n else np.zeros(3)
    rec = np.round((pc.points - offset) / scale).astype(np.int64)
    if n and (rec.max() > np.iinfo(np.int32).max or rec.min() < np.iinfo(np.int32).min):
        raise ValueError("coordinates do not fit int32 at this scale")
    rec = rec.astype(np.int32)
    quant = rec * scale + offset
    lo = quant.min(axis=0) if n else offset
    hi = quant.max(axis=0) if n else offset

    header = bytearray(227)
    header[0:4] = b"LASF"
    header[24] = 1
    header[25] = 2
    header[58:70] = b"citymesher\x00\x00"
    struct.pack_into("<H", header, 94, 227)  # header size
    struct.pack_into("<I", header, 96, 227)  # offset to point data
    struct.pack_into("<I", header, 100, 0)  # VLR count
    header[104] = 0  # point format
    struct.pack_into("<H", header, 105, 20)  # record length
    struct.pack_into("<I", header, 107, n)
    struct.pack_into("<3d", header, 131, *scale)
    struct.pack_into("<3d", header, 155, *offset)
    struct.pack_into("<6d", header, 179, hi[0], lo[0], hi[1], lo[1], hi[2], lo[2])

    dt = np.dtype(
        {
            "names": ["X", "Y", "Z", "intensity", "flags", "classification", "scan", "user", "source"],
            "formats": ["<i4", "<i4", "<i4", "<u2", "u1", "u1", "i1", "u1", "<u2"],
            "offsets": [0, 4, 8, 12, 14, 15, 16, 17, 18],
            "itemsize": 20,
        }
    )
    out = np.zeros(n, dtype=dt)
    out["X"], out["Y"], out["Z"] = rec[:, 0], rec[:, 1], rec[:, 2]
    out["flags"] = 0x11  # single return, first of one
    out["classification"] = pc.classification
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(out.tobytes())


def filter_by_class(pc: PointCloud, classes) -> PointCloud:
    """Subset of points whose classification is in ``classes``, order preserved."""
    mask = np.isin(pc.classification, np.asarray(list(classes), dtype=np.uint8))
    return PointCloud(pc.points[mask], pc.classification[mask])


def remove_z_outliers(pc: PointCloud, k: float = 2.0) -> PointCloud:
    """Single-pass z outlier filter: keep points with |z - mean| <= k * sigma.

    Sigma is the population standard deviation. A cloud whose points all share
    one z value is returned unchanged. Raises EmptyCloud on empty input.
    """
    if len(pc) == 0:
        raise EmptyCloud("cannot filter an empty cloud")
    z = pc.points[:, 2]
    mu = z.mean()
    sigma = z.std()
    mask = np.abs(z - mu) <= k * sigma
    return PointCloud(pc.points[mask], pc.classification[mask])
