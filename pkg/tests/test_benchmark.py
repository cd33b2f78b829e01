import numpy as np
import pytest

from citymesher.benchmark import CSV_HEADER, run_benchmark
from citymesher.pipeline import TIMED_STEPS


def test_resolution_suite_rows_and_csv(tmp_path):
    csv = tmp_path / "res.csv"
    result = run_benchmark(
        "resolution",
        sizes=(12.0, 8.0),
        n_buildings=8,
        tile_size=120.0,
        domain_height=48.0,
        seed=4,
        csv_path=csv,
    )
    assert len(result.rows) == 2 * len(TIMED_STEPS)
    steps = {r[0] for r in result.rows}
    assert steps == set(TIMED_STEPS)
    cells_coarse = next(r[3] for r in result.rows if r[1] == 12.0)
    cells_fine = next(r[3] for r in result.rows if r[1] == 8.0)
    assert cells_fine > cells_coarse
    assert all(r[2] >= 0 for r in result.rows)

    lines = csv.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(result.rows)
    for line in lines[1:]:
        fields = line.split(",")
        assert len(fields) == 5
        assert fields[0] in TIMED_STEPS
        float(fields[1]), float(fields[2])
        int(fields[3]), int(fields[4])


def test_resolution_suite_fits_slopes():
    result = run_benchmark(
        "resolution", sizes=(12.0, 8.0), n_buildings=8, tile_size=120.0, domain_height=48.0, seed=4
    )
    for step in ("3.1", "3.2", "3.3", "3.4", "3.5"):
        assert step in result.slopes
        assert np.isfinite(result.slopes[step])


def test_buildings_suite(tmp_path):
    csv = tmp_path / "bld.csv"
    result = run_benchmark(
        "buildings",
        counts=(4, 12),
        tile_size=150.0,
        mesh_size=12.0,
        domain_height=48.0,
        seed=6,
        csv_path=csv,
    )
    assert len(result.rows) == 2 * len(TIMED_STEPS)
    assert {r[4] for r in result.rows} == {4, 12}
    assert np.isfinite(result.dense_slope_merge)
    assert csv.read_text().splitlines()[0] == CSV_HEADER


def test_cell_counts_deterministic():
    kw = dict(sizes=(10.0,), n_buildings=6, tile_size=100.0, domain_height=40.0, seed=9)
    a = run_benchmark("resolution", **kw)
    b = run_benchmark("resolution", **kw)
    assert [r[3] for r in a.rows] == [r[3] for r in b.rows]


def test_unknown_suite_rejected():
    with pytest.raises(ValueError):
        run_benchmark("speedup")
