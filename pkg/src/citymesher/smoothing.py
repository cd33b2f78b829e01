"""P1 finite-element Laplacian smoothing of the layered volume mesh.

The mesh is deformed vertically by solving Laplace's equation for a scalar
z-displacement u with Dirichlet data on the terrain surface (u = DTM - z)
and, after trimming, on building roofs (u = h1 - z); everywhere else the
natural homogeneous Neumann condition applies. Two passes are run in the
pipeline: ground-only on the untrimmed mesh, then ground plus roofs on the
trimmed mesh. The first pass carries the terrain deformation into the
volume so the second only makes small corrections near roofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

try:
    import pyamg
except ImportError:
    pyamg = None

from .errors import DegenerateCell, InvertedCells, NoConvergence
from .mesh3d import VolumeMesh, boundary_faces, tet_volumes

VOLUME_TOL = 1e-12
DEFAULT_TOL = 1e-10
# Diagonal preconditioning is fine for small systems; above this many free
# vertices the multigrid setup cost pays for itself by keeping iteration
# counts flat as the mesh is refined.
AMG_MIN_UNKNOWNS = 2000


@dataclass
class DisplacementField:
    """Per-vertex scalar z-displacement with solver diagnostics."""

    u: np.ndarray
    iterations: int
    residual: float


@dataclass
class BoundaryConditionSet:
    """Dirichlet data: ground vertices and, optionally, roof vertices."""

    ground_indices: np.ndarray
    ground_values: np.ndarray
    roof_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    roof_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.ground_indices = np.asarray(self.ground_indices, dtype=np.int64)
        self.ground_values = np.asarray(self.ground_values, dtype=np.float64)
        self.roof_indices = np.asarray(self.roof_indices, dtype=np.int64)
        self.roof_values = np.asarray(self.roof_values, dtype=np.float64)
        if np.intersect1d(self.ground_indices, self.roof_indices).size:
            raise ValueError("ground and roof constraint sets overlap")

    def combined(self):
        idx = np.concatenate([self.ground_indices, self.roof_indices])
        val = np.concatenate([self.ground_values, self.roof_values])
        order = np.argsort(idx, kind="stable")
        return idx[order], val[order]

    @property
    def num_constrained(self) -> int:
        return len(self.ground_indices) + len(self.roof_indices)


def assemble_laplacian(vm: VolumeMesh):
    """P1 stiffness matrix of the Laplacian on a tetrahedral mesh.

    Local matrices are V * G G^T with G the (4, 3) gradients of the
    barycentric basis functions, assembled into a CSR matrix. Returns
    (matrix, vertex index map); the map is the identity since every mesh
    vertex is a degree of freedom.
    """
    vols = tet_volumes(vm.vertices, vm.tets)
    if len(vols) == 0:
        raise DegenerateCell("mesh has no cells")
    if vols.min() <= VOLUME_TOL:
        raise DegenerateCell(
            f"tetrahedron volume {vols.min():.3e} at or below {VOLUME_TOL:.0e}"
        )

    p = vm.vertices[vm.tets]
    edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
    inv = np.linalg.inv(edges)
    grads = np.empty((len(vols), 4, 3))
    grads[:, 1:, :] = inv
    grads[:, 0, :] = -inv.sum(axis=1)
    local = np.einsum("tik,tjk,t->tij", grads, grads, vols)

    rows = np.repeat(vm.tets, 4, axis=1).reshape(-1)
    cols = np.tile(vm.tets, (1, 4)).reshape(-1)
    a = sp.coo_matrix(
        (local.reshape(-1), (rows, cols)),
        shape=(vm.num_vertices, vm.num_vertices),
    ).tocsr()
    a.sum_duplicates()
    return a, np.arange(vm.num_vertices)


def solve_bvp(a, bc: BoundaryConditionSet, tol: float = DEFAULT_TOL, max_iter=None):
    """Solve the Laplace problem with Dirichlet data by preconditioned CG.

    Constrained rows and columns are eliminated symmetrically (values
    moved to the right-hand side), keeping the reduced system symmetric
    positive definite; conjugate gradients then drive the relative
    residual below tol. Large systems use a smoothed-aggregation
    multigrid preconditioner, small ones the matrix diagonal. Constrained
    entries of the returned field carry the boundary values exactly.
    """
    n = a.shape[0]
    cons_idx, cons_val = bc.combined()
    if len(cons_idx) == 0:
        raise ValueError("boundary condition set is empty")
    if cons_idx.min() < 0 or cons_idx.max() >= n:
        raise ValueError("constrained vertex outside the mesh")

    free = np.ones(n, dtype=bool)
    free[cons_idx] = False
    nf = int(free.sum())
    u = np.zeros(n)
    u[cons_idx] = cons_val
    if nf == 0:
        return DisplacementField(u=u, iterations=0, residual=0.0)

    a_ff = a[free][:, free].tocsr()
    b = -(a[free][:, ~free] @ u[~free])

    if max_iter is None:
        max_iter = 10 * nf
    if pyamg is not None and nf >= AMG_MIN_UNKNOWNS:
        # the spectral-radius estimate in the setup draws a random start
        # vector from the global generator; pin it so identical systems
        # yield identical hierarchies, and leave caller state untouched
        state = np.random.get_state()
        np.random.seed(0)
        try:
            ml = pyamg.smoothed_aggregation_solver(a_ff, B=np.ones((nf, 1)), max_coarse=50)
        finally:
            np.random.set_state(state)
        prec = ml.aspreconditioner(cycle="V")

        def apply_m(r):
            return np.asarray(prec @ r)

    else:
        d = a_ff.diagonal()

        def apply_m(r):
            return r / d

    x, iters, rel = _pcg(a_ff, b, tol, max_iter, apply_m)
    u[free] = x
    return DisplacementField(u=u, iterations=iters, residual=rel)


def _pcg(a, b, tol, max_iter, apply_m):
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(len(b)), 0, 0.0
    x = np.zeros(len(b))
    r = b.copy()
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    rel = float("inf")
    for it in range(1, max_iter + 1):
        ap = a @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rel = float(np.linalg.norm(r)) / bnorm
        if rel <= tol:
            return x, it, rel
        z = apply_m(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(
        f"relative residual {rel:.3e} above {tol:.0e} after {max_iter} iterations",
        iterations=max_iter,
        residual=rel,
    )


def _displaced(vm: VolumeMesh, u: np.ndarray) -> VolumeMesh:
    vertices = vm.vertices.copy()
    vertices[:, 2] += u
    out = VolumeMesh(
        vertices=vertices,
        tets=vm.tets.copy(),
        cell_markers=vm.cell_markers.copy(),
        layer_index=vm.layer_index.copy(),
        layer_height=vm.layer_height,
        num_layers=vm.num_layers,
        vertex_layer=vm.vertex_layer.copy(),
        roof_layers=dict(vm.roof_layers),
    )
    vols = tet_volumes(out.vertices, out.tets)
    bad = vols <= 0.0
    if bad.any():
        raise InvertedCells(
            f"{int(bad.sum())} inverted cell(s) after smoothing",
            count=int(bad.sum()),
            min_volume=float(vols.min()),
        )
    return out


def ground_condition_untrimmed(vm: VolumeMesh, dtm) -> BoundaryConditionSet:
    """u = DTM(x, y) - z on every bottom-layer vertex."""
    idx = np.nonzero(vm.vertex_layer == 0)[0]
    target = dtm.sample_many(vm.vertices[idx, :2])
    return BoundaryConditionSet(
        ground_indices=idx, ground_values=target - vm.vertices[idx, 2]
    )


def smooth_ground(vm: VolumeMesh, dtm, tol: float = DEFAULT_TOL) -> VolumeMesh:
    """Deform the untrimmed layer mesh so the bottom follows the terrain.

    Dirichlet data u = DTM - z on all layer-0 vertices, natural Neumann
    elsewhere; the solve carries the terrain shape smoothly up through
    the volume. Raises InvertedCells if the deformation folds any tet.
    """
    a, _ = assemble_laplacian(vm)
    bc = ground_condition_untrimmed(vm, dtm)
    disp = solve_bvp(a, bc, tol=tol)
    return _displaced(vm, disp.u)


def boundary_conditions_trimmed(vm: VolumeMesh, dtm, bh) -> BoundaryConditionSet:
    """Ground and roof Dirichlet data for a trimmed mesh.

    Ground vertices belong to at least one boundary face with all three
    vertices at pre-trim layer 0. Roof vertices belong to a boundary face
    whose owner is marked for building b with all three vertices on b's
    roof layer; their target height is bh[b] (absolute roof height).
    """
    faces, owners = boundary_faces(vm)
    fl = vm.vertex_layer[faces]

    ground = np.unique(faces[(fl == 0).all(axis=1)])

    roof_target = np.full(vm.num_vertices, np.nan)
    markers = vm.cell_markers[owners]
    for b, k in sorted(vm.roof_layers.items()):
        on_roof = (markers == b) & (fl == k).all(axis=1)
        if on_roof.any():
            roof_target[np.unique(faces[on_roof])] = bh[b]
    roof = np.nonzero(~np.isnan(roof_target))[0]
    roof = np.setdiff1d(roof, ground)

    return BoundaryConditionSet(
        ground_indices=ground,
        ground_values=dtm.sample_many(vm.vertices[ground, :2]) - vm.vertices[ground, 2],
        roof_indices=roof,
        roof_values=roof_target[roof] - vm.vertices[roof, 2],
    )


def smooth_full(vm: VolumeMesh, dtm, bh, tol: float = DEFAULT_TOL) -> VolumeMesh:
    """Pin building roofs at their true heights on the trimmed mesh.

    Solves the same Laplace problem with ground data u = DTM - z plus
    roof data u = bh[b] - z, so each trimmed roof lands on the building's
    computed height while the terrain stays put. Run after smooth_ground;
    on an unsmoothed mesh over steep terrain the combined displacement
    can fold cells near rooftops (InvertedCells).
    """
    a, _ = assemble_laplacian(vm)
    bc = boundary_conditions_trimmed(vm, dtm, bh)
    disp = solve_bvp(a, bc, tol=tol)
    return _displaced(vm, disp.u)
