"""LAS parser and point filter tests.

The byte-level LAS builder below is the oracle: it assembles files directly
with struct.pack, independent of the package's own writer, so reader bugs
cannot cancel against writer bugs.
"""

import struct

import numpy as np
import pytest

from citymesher.errors import BadMagic, EmptyCloud, TruncatedFile, UnsupportedPointFormat
from citymesher.pointcloud import (
    PointCloud,
    concat_clouds,
    filter_by_class,
    read_las,
    remove_z_outliers,
    write_las,
)

RECORD_SIZE = {0: 20, 1: 28, 2: 26, 3: 34}


def build_las_bytes(
    records,
    classes,
    scale=(0.01, 0.01, 0.01),
    offset=(1000.0, 2000.0, 30.0),
    point_format=0,
    version=(1, 2),
    count_override=None,
    truncate=0,
):
    """Hand-assembled LAS byte string. ``records`` are raw int32 triples."""
    header_size = {(1, 2): 227, (1, 3): 235, (1, 4): 375}[version]
    n = len(records)
    header = bytearray(header_size)
    header[0:4] = b"LASF"
    header[24], header[25] = version
    struct.pack_into("<H", header, 94, header_size)
    struct.pack_into("<I", header, 96, header_size)
    header[104] = point_format
    struct.pack_into("<H", header, 105, RECORD_SIZE[point_format])
    legacy = n if count_override is None else count_override
    struct.pack_into("<I", header, 107, legacy)
    struct.pack_into("<3d", header, 131, *scale)
    struct.pack_into("<3d", header, 155, *offset)
    if version == (1, 4):
        struct.pack_into("<Q", header, 247, n)

    body = bytearray()
    for (ix, iy, iz), cls in zip(records, classes):
        rec = bytearray(RECORD_SIZE[point_format])
        struct.pack_into("<3i", rec, 0, ix, iy, iz)
        struct.pack_into("<H", rec, 12, 0)
        rec[14] = 0x11
        rec[15] = cls
        body += rec
    blob = bytes(header) + bytes(body)
    if truncate:
        blob = blob[:-truncate]
    return blob


def write_blob(tmp_path, blob, name="cloud.las"):
    p = tmp_path / name
    p.write_bytes(blob)
    return p


def test_read_las_reconstructs_coordinates(tmp_path):
    records = [(100, 200, 300), (-50, 0, 125), (2_000_000, -2_000_000, 0)]
    classes = [2, 6, 9]
    path = write_blob(tmp_path, build_las_bytes(records, classes))
    pc = read_las(path)
    assert len(pc) == 3
    expected = np.array(records, dtype=float) * 0.01 + np.array([1000.0, 2000.0, 30.0])
    np.testing.assert_array_equal(pc.points, expected)
    np.testing.assert_array_equal(pc.classification, np.array(classes, dtype=np.uint8))


@pytest.mark.parametrize("fmt", [0, 1, 2, 3])
def test_read_las_all_point_formats(tmp_path, fmt):
    records = [(1, 2, 3), (4, 5, 6)]
    path = write_blob(tmp_path, build_las_bytes(records, [2, 6], point_format=fmt))
    pc = read_las(path)
    assert len(pc) == 2
    np.testing.assert_allclose(pc.points[0], [1000.01, 2000.02, 30.03])
    assert list(pc.classification) == [2, 6]


def test_read_las_14_uses_64bit_count(tmp_path):
    records = [(10, 10, 10), (20, 20, 20)]
    blob = build_las_bytes(records, [2, 2], version=(1, 4), count_override=0)
    pc = read_las(write_blob(tmp_path, blob))
    assert len(pc) == 2


def test_read_las_13_header(tmp_path):
    blob = build_las_bytes([(7, 7, 7)], [2], version=(1, 3))
    pc = read_las(write_blob(tmp_path, blob))
    assert len(pc) == 1


def test_read_las_bad_magic(tmp_path):
    blob = bytearray(build_las_bytes([(1, 1, 1)], [2]))
    blob[0:4] = b"NOPE"
    with pytest.raises(BadMagic):
        read_las(write_blob(tmp_path, bytes(blob)))


def test_read_las_unsupported_format(tmp_path):
    for fmt in (6, 0x80):  # real format above 3, and the LAZ compression bit
        blob = bytearray(build_las_bytes([(1, 1, 1)], [2]))
        blob[104] = fmt
        with pytest.raises(UnsupportedPointFormat):
            read_las(write_blob(tmp_path, bytes(blob)))


def test_read_las_truncated(tmp_path):
    blob = build_las_bytes([(1, 1, 1), (2, 2, 2)], [2, 2], truncate=5)
    with pytest.raises(TruncatedFile):
        read_las(write_blob(tmp_path, blob))


def test_read_las_count_beyond_payload(tmp_path):
    blob = build_las_bytes([(1, 1, 1)], [2], count_override=10)
    with pytest.raises(TruncatedFile):
        read_las(write_blob(tmp_path, blob))


def test_write_read_round_trip_within_quantum(tmp_path):
    rng = np.random.default_rng(2)
    pts = rng.uniform([0, 0, -10], [500, 500, 80], size=(1000, 3))
    cls = rng.choice([1, 2, 6, 9], size=1000).astype(np.uint8)
    pc = PointCloud(pts, cls)
    path = tmp_path / "rt.las"
    write_las(pc, path)
    back = read_las(path)
    assert len(back) == len(pc)
    # one scale quantum (1 mm) per axis
    assert np.abs(back.points - pc.points).max() <= 1e-3 + 1e-12
    np.testing.assert_array_equal(back.classification, pc.classification)


def test_filter_by_class_preserves_order():
    pts = np.arange(18, dtype=float).reshape(6, 3)
    cls = np.array([2, 6, 2, 9, 6, 1], dtype=np.uint8)
    pc = PointCloud(pts, cls)
    ground = filter_by_class(pc, (2, 9))
    np.testing.assert_array_equal(ground.classification, [2, 2, 9])
    np.testing.assert_array_equal(ground.points, pts[[0, 2, 3]])
    roofs = filter_by_class(pc, (6,))
    np.testing.assert_array_equal(roofs.points, pts[[1, 4]])


def test_remove_z_outliers_matches_direct_mask():
    rng = np.random.default_rng(9)
    z = np.concatenate([rng.normal(10.0, 0.5, 200), [50.0, -40.0]])
    pts = np.column_stack([rng.uniform(0, 10, len(z)), rng.uniform(0, 10, len(z)), z])
    pc = PointCloud(pts, np.full(len(z), 2, dtype=np.uint8))
    out = remove_z_outliers(pc)
    mask = np.abs(z - z.mean()) <= 2.0 * z.std()
    np.testing.assert_array_equal(out.points, pts[mask])
    assert 50.0 not in out.points[:, 2]
    assert -40.0 not in out.points[:, 2]


def test_remove_z_outliers_identical_z_kept():
    pts = np.zeros((5, 3))
    pts[:, 2] = 7.5
    pc = PointCloud(pts, np.full(5, 2, dtype=np.uint8))
    out = remove_z_outliers(pc)
    assert len(out) == 5


def test_remove_z_outliers_single_pass_only():
    # after one pass the extremes of the remaining set must survive
    z = np.array([0.0, 1.0, 2.0, 3.0, 100.0])
    pts = np.column_stack([np.zeros(5), np.zeros(5), z])
    pc = PointCloud(pts, np.full(5, 2, dtype=np.uint8))
    out = remove_z_outliers(pc)
    mask = np.abs(z - z.mean()) <= 2.0 * z.std()
    assert list(out.points[:, 2]) == list(z[mask])


def test_remove_z_outliers_empty_raises():
    pc = PointCloud(np.empty((0, 3)), np.empty(0, dtype=np.uint8))
    with pytest.raises(EmptyCloud):
        remove_z_outliers(pc)


def test_concat_clouds():
    a = PointCloud(np.ones((2, 3)), np.array([2, 2], dtype=np.uint8))
    b = PointCloud(np.zeros((3, 3)), np.array([6, 6, 6], dtype=np.uint8))
    c = concat_clouds([a, b])
    assert len(c) == 5
    np.testing.assert_array_equal(c.classification, [2, 2, 6, 6, 6])


def test_bounds_empty_raises():
    with pytest.raises(EmptyCloud):
        PointCloud(np.empty((0, 3)), np.empty(0, dtype=np.uint8)).bounds
