"""Mesh file writers: legacy ASCII VTK, Wavefront OBJ, ASCII STL.

All floats are written with 9 significant digits via ``%.9g`` so repeated
exports of the same mesh are byte-identical. Negative zero is normalized
to plain zero first.
"""

from __future__ import annotations

import numpy as np


def _g9(x: float) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0
    return format(x, ".9g")


def _point(row) -> str:
    return " ".join(_g9(c) for c in row)


def write_vtk(vm, path, title: str = "citymesher volume mesh") -> None:
    """Write a tetrahedral mesh as a legacy ASCII VTK unstructured grid.

    Layout: POINTS as doubles, CELLS as 4-index records, CELL_TYPES all 10
    (tetrahedron), then per-cell building markers as an int scalar field.
    """
    verts = np.asarray(vm.vertices, dtype=np.float64)
    tets = np.asarray(vm.tets, dtype=np.int64)
    markers = np.asarray(vm.cell_markers, dtype=np.int64)
    n, m = len(verts), len(tets)
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out.extend(_point(p) for p in verts)
    out.append(f"CELLS {m} {5 * m}")
    out.extend("4 " + " ".join(str(i) for i in t) for t in tets)
    out.append(f"CELL_TYPES {m}")
    out.extend("10" for _ in range(m))
    out.append(f"CELL_DATA {m}")
    out.append("SCALARS marker int 1")
    out.append("LOOKUP_TABLE default")
    out.extend(str(c) for c in markers)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


def write_obj(sm, path) -> None:
    """Write a triangle surface as OBJ (v records, 1-based f records)."""
    verts = np.asarray(sm.vertices, dtype=np.float64)
    tris = np.asarray(sm.triangles, dtype=np.int64)
    out = ["v " + _point(p) for p in verts]
    out.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in tris)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


def write_mesh2d_obj(m2, path) -> None:
    """Write a planar triangulation as OBJ with z = 0, for inspection."""
    verts = np.asarray(m2.vertices, dtype=np.float64)
    tris = np.asarray(m2.triangles, dtype=np.int64)
    out = [f"v {_g9(x)} {_g9(y)} 0" for x, y in verts]
    out.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in tris)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


def write_stl(sm, path, name: str = "citymesher") -> None:
    """Write a triangle surface as ASCII STL with unit facet normals."""
    verts = np.asarray(sm.vertices, dtype=np.float64)
    tris = np.asarray(sm.triangles, dtype=np.int64)
    p = verts[tris]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    ok = lengths > 0
    normals[ok] /= lengths[ok, None]
    normals[~ok] = 0.0
    out = [f"solid {name}"]
    for k in range(len(tris)):
        out.append(f"facet normal {_point(normals[k])}")
        out.append("  outer loop")
        for j in range(3):
            out.append(f"    vertex {_point(p[k, j])}")
        out.append("  endloop")
        out.append("endfacet")
    out.append(f"endsolid {name}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out))
        fh.write("\n")
