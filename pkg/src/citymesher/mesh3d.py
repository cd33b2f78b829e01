"""Layered tetrahedral meshing of a 2D city mesh.

A triangular base mesh is extruded into ``num_layers`` identical layers of
prisms, each prism split into three tetrahedra with a vertex-index sorting
rule that makes neighbouring prisms agree on the diagonals of their shared
quadrilateral faces, so the result is conforming with no hanging nodes.
Building interiors are then trimmed away layer by layer, and the boundary
of the remaining volume can be extracted as a watertight triangle surface.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonManifold

MARKER_EXTERIOR = -2


@dataclass
class VolumeMesh:
    """Tetrahedral mesh of the air volume over a terrain.

    ``cell_markers`` carries the building index of the base triangle each
    tet was extruded from (or -2 outside every footprint), ``layer_index``
    the extrusion layer. ``vertex_layer`` keeps each vertex's original
    layer through trimming so boundary conditions can still identify the
    ground and roof surfaces, and ``roof_layers`` maps trimmed building
    markers to the layer their roof was snapped to.
    """

    vertices: np.ndarray
    tets: np.ndarray
    cell_markers: np.ndarray
    layer_index: np.ndarray
    layer_height: float
    num_layers: int
    vertex_layer: np.ndarray
    roof_layers: dict = field(default_factory=dict)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.tets)


@dataclass
class SurfaceMesh:
    """Triangle surface with outward-oriented faces."""

    vertices: np.ndarray
    triangles: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def split_prism(base, top):
    """Split one prism into three tets using the sorted-base rule.

    ``base`` must hold the bottom vertex indices sorted ascending and
    ``top`` the corresponding top indices in the same order. Both prisms
    on either side of a shared quad face then pick the same diagonal,
    which is what makes the layered mesh conforming. Returns the three
    tets as index 4-tuples; orientation is the caller's concern.
    """
    u1, u2, u3 = base
    v1, v2, v3 = top
    return (
        (u1, u2, u3, v3),
        (u1, v2, u2, v3),
        (u1, v1, v2, v3),
    )


def tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes, positive for positively oriented tets."""
    p = vertices[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def layer_mesh(m2, domain_height: float, layer_h: float) -> VolumeMesh:
    """Extrude a 2D mesh into a conforming tetrahedral layer mesh.

    Vertices are replicated at z = k * layer_h for k = 0..num_layers with
    num_layers = ceil(domain_height / layer_h); the vertex at (i, k) gets
    global index k * n + i. Each prism is split by `split_prism` on the
    ascending-sorted base triangle; cell markers and the layer index are
    inherited from the base triangle and layer.
    """
    if layer_h <= 0.0:
        raise ValueError("layer_h must be positive")
    num_layers = max(1, math.ceil(domain_height / layer_h))
    n = m2.num_vertices
    levels = num_layers + 1

    vertices = np.empty((levels * n, 3), dtype=np.float64)
    vertices[:, :2] = np.tile(m2.vertices, (levels, 1))
    vertices[:, 2] = np.repeat(np.arange(levels) * layer_h, n)

    s = np.sort(m2.triangles.astype(np.int64), axis=1)
    p = m2.vertices
    e1 = p[s[:, 1]] - p[s[:, 0]]
    e2 = p[s[:, 2]] - p[s[:, 0]]
    cw = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0.0

    blocks = []
    for k in range(num_layers):
        u = s + k * n
        v = s + (k + 1) * n
        t1 = np.column_stack([u[:, 0], u[:, 1], u[:, 2], v[:, 2]])
        t2 = np.column_stack([u[:, 0], v[:, 1], u[:, 1], v[:, 2]])
        t3 = np.column_stack([u[:, 0], v[:, 0], v[:, 1], v[:, 2]])
        for t in (t1, t2, t3):
            # sorted-but-clockwise bases flip the formula's sign; swapping
            # the last two vertices restores positive orientation without
            # changing the vertex set (conformity is a set property)
            t[cw] = t[cw][:, [0, 1, 3, 2]]
        blocks.append(np.stack([t1, t2, t3], axis=1).reshape(-1, 4))

    tets = np.vstack(blocks)
    markers = np.tile(np.repeat(m2.markers.astype(np.int64), 3), num_layers)
    layer_index = np.repeat(np.arange(num_layers, dtype=np.int64), 3 * len(s))

    return VolumeMesh(
        vertices=vertices,
        tets=tets,
        cell_markers=markers,
        layer_index=layer_index,
        layer_height=float(layer_h),
        num_layers=num_layers,
        vertex_layer=np.repeat(np.arange(levels, dtype=np.int64), n),
        roof_layers={},
    )


def building_roof_layer(rel_height: float, layer_h: float, num_layers: int) -> int:
    """Layer the building roof snaps to: nearest layer, clamped to
    [1, num_layers - 1] so every building keeps one occupied layer and one
    free layer below the domain top."""
    k = int(round(rel_height / layer_h))
    return min(max(k, 1), num_layers - 1)


def trim_mesh(vm: VolumeMesh, cm, dtm=None) -> VolumeMesh:
    """Remove tetrahedra inside buildings up to the nearest-layer roof.

    A tet is removed when its marker is building b and its layer lies
    below b's roof layer round((h1_b - h0_b) / layer_h). Unused vertices
    are compacted preserving relative order; the mapping from building
    marker to roof layer is recorded on the result. ``dtm`` is accepted
    for interface parity with the other pipeline steps and is not used:
    the criterion depends only on relative building heights.
    """
    untouched = not cm.buildings
    if cm.buildings and vm.num_layers < 2:
        warnings.warn(
            "domain has a single layer; buildings cannot be trimmed",
            stacklevel=2,
        )
        untouched = True
    if untouched:
        return VolumeMesh(
            vertices=vm.vertices.copy(),
            tets=vm.tets.copy(),
            cell_markers=vm.cell_markers.copy(),
            layer_index=vm.layer_index.copy(),
            layer_height=vm.layer_height,
            num_layers=vm.num_layers,
            vertex_layer=vm.vertex_layer.copy(),
            roof_layers={},
        )

    roof_layers = {}
    tall = []
    for b_idx, b in enumerate(cm.buildings):
        rel = b.h1 - b.h0
        if round(rel / vm.layer_height) > vm.num_layers - 1:
            tall.append(b_idx)
        roof_layers[b_idx] = building_roof_layer(
            rel, vm.layer_height, vm.num_layers
        )
    if tall:
        warnings.warn(
            f"{len(tall)} building(s) taller than the domain were truncated "
            f"at layer {vm.num_layers - 1}",
            stacklevel=2,
        )

    k_of = np.zeros(len(cm.buildings), dtype=np.int64)
    for b_idx, k in roof_layers.items():
        k_of[b_idx] = k
    inside = vm.cell_markers >= 0
    remove = np.zeros(vm.num_cells, dtype=bool)
    remove[inside] = vm.layer_index[inside] < k_of[vm.cell_markers[inside]]
    keep = ~remove

    tets = vm.tets[keep]
    used = np.unique(tets)
    remap = np.full(vm.num_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))

    return VolumeMesh(
        vertices=vm.vertices[used],
        tets=remap[tets],
        cell_markers=vm.cell_markers[keep],
        layer_index=vm.layer_index[keep],
        layer_height=vm.layer_height,
        num_layers=vm.num_layers,
        vertex_layer=vm.vertex_layer[used],
        roof_layers=roof_layers,
    )


# faces of a positively oriented tet, outward-oriented
_TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def boundary_faces(vm: VolumeMesh):
    """Outward-oriented boundary faces and their owning cell indices."""
    faces = vm.tets[:, _TET_FACES].reshape(-1, 3)
    owner = np.repeat(np.arange(vm.num_cells), 4)
    key = np.sort(faces, axis=1)
    uniq, inv, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    if counts.max() > 2:
        raise NonManifold("a face is shared by more than two cells")
    on_boundary = counts[inv] == 1
    return faces[on_boundary], owner[on_boundary]


def extract_boundary(vm: VolumeMesh) -> SurfaceMesh:
    """Watertight outward-oriented boundary surface of a volume mesh.

    Faces incident to exactly one tet are collected with the orientation
    induced by their (positively oriented) owner, which points away from
    the owner's centroid. Raises NonManifold when the boundary is not a
    closed 2-manifold, which signals a conformity violation upstream.
    """
    tris, _ = boundary_faces(vm)

    edges = np.concatenate(
        [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]
    )
    ek = np.sort(edges, axis=1)
    _, inv, counts = np.unique(ek, axis=0, return_inverse=True, return_counts=True)
    if counts.min() != 2 or counts.max() != 2:
        raise NonManifold("boundary edge not shared by exactly two triangles")
    # opposite traversal of each shared edge means consistent orientation
    _, dcounts = np.unique(edges, axis=0, return_counts=True)
    if dcounts.max() != 1:
        raise NonManifold("boundary triangles disagree on orientation")

    used = np.unique(tris)
    remap = np.full(vm.num_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return SurfaceMesh(vertices=vm.vertices[used], triangles=remap[tris])


def surface_volume(sm: SurfaceMesh) -> float:
    """Enclosed volume of a closed surface by the divergence theorem."""
    p = sm.vertices[sm.triangles]
    return float(
        np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0
    )


def mesh_quality_report(vm: VolumeMesh) -> dict:
    """Quality summary: dihedral angle range, minimum signed volume,
    aspect-ratio histogram, and cell/vertex counts.

    Aspect ratio is longest edge over shortest edge per tet; the histogram
    uses fixed bin edges [1, 1.5, 2, 3, 5, 10, inf].
    """
    vols = tet_volumes(vm.vertices, vm.tets)

    p = vm.vertices[vm.tets]
    normals = np.cross(
        p[:, _TET_FACES[:, 1]] - p[:, _TET_FACES[:, 0]],
        p[:, _TET_FACES[:, 2]] - p[:, _TET_FACES[:, 0]],
    )
    nn = normals / np.maximum(
        np.linalg.norm(normals, axis=2, keepdims=True), 1e-300
    )
    pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    cosines = np.stack(
        [-np.einsum("ij,ij->i", nn[:, i], nn[:, j]) for i, j in pairs], axis=1
    )
    dihedrals = np.degrees(np.arccos(np.clip(cosines, -1.0, 1.0)))

    combos = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    lengths = np.stack(
        [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in combos], axis=1
    )
    aspect = lengths.max(axis=1) / np.maximum(lengths.min(axis=1), 1e-300)
    edges = [1.0, 1.5, 2.0, 3.0, 5.0, 10.0, np.inf]
    hist, _ = np.histogram(aspect, bins=edges)

    return {
        "num_cells": int(vm.num_cells),
        "num_vertices": int(vm.num_vertices),
        "min_volume": float(vols.min()) if len(vols) else 0.0,
        "min_dihedral_deg": float(dihedrals.min()) if len(vols) else 0.0,
        "max_dihedral_deg": float(dihedrals.max()) if len(vols) else 0.0,
        "aspect_bins": edges,
        "aspect_histogram": hist.tolist(),
    }
