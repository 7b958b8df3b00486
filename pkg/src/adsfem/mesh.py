"""Tetrahedral meshing of the spherical shell between radii 1 and R.

The shell is built on an n x n x n cubic lattice over [-2, 2]^3 with
n = 2^J cells per axis.  The central block of cells around the origin is
removed, every remaining cell is split into six tetrahedra along a fixed
main diagonal (Kuhn subdivision, which is face-compatible across
neighboring cells), and each vertex is then pushed radially so the cavity
boundary lands exactly on the unit sphere and the outer cube boundary on
the sphere of radius R.  Boundary classification happens on the exact
integer lattice before the mapping, never on floating point radii.
"""

from dataclasses import dataclass

import numpy as np

INTERIOR = 0
GAMMA_I = 1
GAMMA_O = 2
TAG_NAMES = {INTERIOR: "interior", GAMMA_I: "gamma_i", GAMMA_O: "gamma_o"}

_LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_LOCAL_FACES = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))

# The six path tetrahedra of a cube, one per axis permutation.  Odd
# permutations produce negatively oriented tets, so their last two vertices
# are stored swapped.
_KUHN_PERMS = (
    ((0, 1, 2), False),
    ((0, 2, 1), True),
    ((1, 0, 2), True),
    ((1, 2, 0), False),
    ((2, 0, 1), False),
    ((2, 1, 0), True),
)


class MeshConstructionError(ValueError):
    """The requested lattice produced a broken subdivision or mapping."""


@dataclass(frozen=True)
class LatticeSpec:
    """Shell lattice resolution: 2^J cells per axis, outer sphere radius R."""

    J: int
    R: float = 4.0

    def __post_init__(self):
        if not isinstance(self.J, (int, np.integer)) or isinstance(self.J, bool):
            raise ValueError("subdivision exponent J must be an integer")
        if self.J < 2:
            raise ValueError("subdivision exponent J must be >= 2")
        if not self.R > 1.0:
            raise ValueError("outer radius must exceed the unit inner radius")

    @property
    def n(self):
        """Cells per axis (1/h)."""
        return 2**self.J

    @property
    def h(self):
        return 2.0**-self.J


@dataclass(frozen=True)
class Mesh:
    """Immutable tetrahedral mesh with derived edge/face tables and boundary tags.

    Edges are stored as ascending vertex pairs and faces as ascending vertex
    triples, both in lexicographic order; this fixes the tangent and normal
    directions once and for all (tangent from lower to higher vertex index,
    face normal by the right-hand rule on the ascending triple).
    """

    vertices: np.ndarray      # (nv, 3) float64 mapped coordinates
    tets: np.ndarray          # (nt, 4) int32, positive volume ordering
    edges: np.ndarray         # (ne, 2) int32 ascending pairs
    faces: np.ndarray         # (nf, 3) int32 ascending triples
    tet_edges: np.ndarray     # (nt, 6) global edge id per local edge
    tet_faces: np.ndarray     # (nt, 4) global face id per local face
    face_edges: np.ndarray    # (nf, 3) edge ids of (ab, ac, bc)
    face_tet_count: np.ndarray  # (nf,) 1 = boundary face, 2 = interior face
    vertex_tags: np.ndarray   # int8, INTERIOR / GAMMA_I / GAMMA_O
    edge_tags: np.ndarray
    face_tags: np.ndarray
    lattice: LatticeSpec | None = None
    lattice_indices: np.ndarray | None = None  # (nv, 3) premap node indices

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def n_tets(self):
        return self.tets.shape[0]


@dataclass(frozen=True)
class MeshStatistics:
    """Entity counts split by boundary tag."""

    vertices: dict
    edges: dict
    faces: dict
    n_tets: int

    @property
    def n_vertices(self):
        return sum(self.vertices.values())


def _derive_connectivity(nv, tets):
    t = np.asarray(tets, dtype=np.int64)
    nt = t.shape[0]

    pairs = np.sort(t[:, _LOCAL_EDGES], axis=2).reshape(-1, 2)
    ekeys = pairs[:, 0] * nv + pairs[:, 1]
    uek, tet_edges = np.unique(ekeys, return_inverse=True)
    edges = np.column_stack((uek // nv, uek % nv)).astype(np.int32)

    tris = np.sort(t[:, _LOCAL_FACES], axis=2).reshape(-1, 3)
    fkeys = (tris[:, 0] * nv + tris[:, 1]) * nv + tris[:, 2]
    ufk, tet_faces, fcount = np.unique(
        fkeys, return_inverse=True, return_counts=True
    )
    c = ufk % nv
    ab = ufk // nv
    a = ab // nv
    b = ab % nv
    faces = np.column_stack((a, b, c)).astype(np.int32)

    fe_keys = np.stack((a * nv + b, a * nv + c, b * nv + c), axis=1)
    face_edges = np.searchsorted(uek, fe_keys).astype(np.int32)

    return (
        edges,
        faces,
        tet_edges.reshape(nt, 6).astype(np.int32),
        tet_faces.reshape(nt, 4).astype(np.int32),
        face_edges,
        fcount.astype(np.int8),
    )


def _derive_entity_tags(vertex_tags, faces, face_edges, face_tet_count, n_edges,
                        strict):
    """Tag boundary faces from their vertex tags, then edges from face tags.

    An edge or face belongs to a boundary component iff it is part of a
    boundary triangle carrying that tag; shared vertices alone do not count.
    """
    face_tags = np.zeros(faces.shape[0], dtype=np.int8)
    boundary = face_tet_count == 1
    vt = vertex_tags[faces]
    gi = boundary & (vt == GAMMA_I).all(axis=1)
    go = boundary & (vt == GAMMA_O).all(axis=1)
    if strict and not ((gi | go) == boundary).all():
        raise MeshConstructionError("boundary face with inconsistent vertex tags")
    face_tags[gi] = GAMMA_I
    face_tags[go] = GAMMA_O

    edge_tags = np.zeros(n_edges, dtype=np.int8)
    gi_edges = np.unique(face_edges[gi])
    go_edges = np.unique(face_edges[go])
    if np.intersect1d(gi_edges, go_edges).size:
        raise MeshConstructionError("edge shared by both boundary components")
    edge_tags[gi_edges] = GAMMA_I
    edge_tags[go_edges] = GAMMA_O
    return face_tags, edge_tags


def signed_volumes(vertices, tets):
    """Signed volume of every tet under its stored vertex order."""
    x = vertices[tets]
    d = x[:, 1:] - x[:, :1]
    return np.linalg.det(d) / 6.0


def mesh_from_cells(vertices, tets, vertex_tags=None):
    """Assemble a Mesh from raw vertices and tetrahedra.

    Intended for small hand-built meshes; every tet must already be
    positively oriented.  Without vertex tags the mesh is untagged and all
    entities count as interior.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int32)
    vols = signed_volumes(vertices, tets)
    if (vols <= 0.0).any():
        bad = int(np.argmin(vols))
        raise MeshConstructionError(
            f"tet {bad} has non-positive volume {vols[bad]:.3e}"
        )
    if vertex_tags is None:
        vertex_tags = np.zeros(vertices.shape[0], dtype=np.int8)
    else:
        vertex_tags = np.asarray(vertex_tags, dtype=np.int8)
    edges, faces, tet_edges, tet_faces, face_edges, fcount = _derive_connectivity(
        vertices.shape[0], tets
    )
    face_tags, edge_tags = _derive_entity_tags(
        vertex_tags, faces, face_edges, fcount, edges.shape[0], strict=False
    )
    return Mesh(
        vertices, tets, edges, faces, tet_edges, tet_faces, face_edges,
        fcount, vertex_tags, edge_tags, face_tags,
    )


def _cavity_half_width(n):
    # n/8 cells for J >= 3; the n = 4 lattice cannot center a single-cell
    # cavity, so it falls back to the two cells meeting at the origin
    return max(1, n // 8)


def build_shell_mesh(spec):
    """Build the mapped shell mesh for a LatticeSpec.

    Steps: (a) n^3 cell lattice over [-2, 2]^3, (b) remove the central cell
    block covering the unit-side cube, (c) six Kuhn tets per remaining cell,
    (d) map every vertex x -> x * rho(|x|_inf) / |x|_2 with rho affine from
    the cavity surface to 1 and the outer surface to R, (e) tag boundaries
    from exact lattice coordinates.
    """
    if not isinstance(spec, LatticeSpec):
        spec = LatticeSpec(*spec)
    n = spec.n
    w = _cavity_half_width(n)
    half = n // 2

    # -- lattice nodes, dropping those strictly inside the cavity
    axis = np.arange(n + 1)
    node_ids = np.full((n + 1, n + 1, n + 1), -1, dtype=np.int64)
    dist = np.abs(axis - half)
    inside = dist < w
    removed = inside[:, None, None] & inside[None, :, None] & inside[None, None, :]
    kept = ~removed
    node_ids[kept] = np.arange(int(kept.sum()))
    ii, jj, kk = np.nonzero(kept)
    lattice_indices = np.column_stack((ii, jj, kk)).astype(np.int32)

    # -- cells outside the cavity block, lexicographic order
    caxis = np.arange(n)
    chole = (caxis >= half - w) & (caxis < half + w)
    cell_removed = (
        chole[:, None, None] & chole[None, :, None] & chole[None, None, :]
    )
    ci, cj, ck = np.nonzero(~cell_removed)

    # -- Kuhn subdivision: vertex offsets accumulate along each permutation
    corner = np.stack((ci, cj, ck), axis=1)
    tets = np.empty((ci.size, 6, 4), dtype=np.int64)
    for p, ((a0, a1, a2), swap) in enumerate(_KUHN_PERMS):
        offs = np.zeros((4, 3), dtype=np.int64)
        offs[1, a0] = 1
        offs[2, a0] = 1
        offs[2, a1] = 1
        offs[3] = 1
        if swap:
            offs = offs[[0, 1, 3, 2]]
        for v in range(4):
            node = corner + offs[v]
            tets[:, p, v] = node_ids[node[:, 0], node[:, 1], node[:, 2]]
    tets = tets.reshape(-1, 4)
    if (tets < 0).any():
        raise MeshConstructionError("cell references a removed lattice node")

    # -- radial mapping, exact dyadic premap coordinates
    pre = -2.0 + 4.0 * lattice_indices / n
    linf = np.abs(pre).max(axis=1)
    l2 = np.linalg.norm(pre, axis=1)
    s = 4.0 * w / n  # cavity surface in the max norm (1/2 for J >= 3)
    rho = 1.0 + (spec.R - 1.0) * ((linf - s) / (2.0 - s))
    vertices = pre * (rho / l2)[:, None]

    vols = signed_volumes(vertices, tets)
    if (vols <= 0.0).any():
        raise MeshConstructionError(
            "radial mapping produced a non-positive tet volume"
        )

    # -- exact integer boundary classification
    dmax = np.abs(lattice_indices - half).max(axis=1)
    in_cavity_closure = (np.abs(lattice_indices - half) <= w).all(axis=1)
    vertex_tags = np.zeros(vertices.shape[0], dtype=np.int8)
    vertex_tags[in_cavity_closure & (dmax == w)] = GAMMA_I
    vertex_tags[dmax == half] = GAMMA_O

    edges, faces, tet_edges, tet_faces, face_edges, fcount = _derive_connectivity(
        vertices.shape[0], tets
    )
    face_tags, edge_tags = _derive_entity_tags(
        vertex_tags, faces, face_edges, fcount, edges.shape[0], strict=True
    )

    mesh = Mesh(
        vertices, tets.astype(np.int32), edges, faces, tet_edges, tet_faces,
        face_edges, fcount, vertex_tags, edge_tags, face_tags,
        lattice=spec, lattice_indices=lattice_indices,
    )
    _validate_shell(mesh, spec)
    return mesh


def _validate_shell(mesh, spec):
    radii = np.linalg.norm(mesh.vertices, axis=1)
    tol = 1e-12
    if np.abs(radii[mesh.vertex_tags == GAMMA_I] - 1.0).max() > tol:
        raise MeshConstructionError("inner boundary missed the unit sphere")
    if np.abs(radii[mesh.vertex_tags == GAMMA_O] - spec.R).max() > tol:
        raise MeshConstructionError("outer boundary missed radius R")
    if radii.min() < 1.0 - tol or radii.max() > spec.R + tol:
        raise MeshConstructionError("mapped vertex escaped the shell")


def mesh_statistics(mesh):
    """Exact entity counts per boundary tag."""

    def per_tag(tags):
        return {
            TAG_NAMES[t]: int((tags == t).sum())
            for t in (INTERIOR, GAMMA_I, GAMMA_O)
        }

    return MeshStatistics(
        vertices=per_tag(mesh.vertex_tags),
        edges=per_tag(mesh.edge_tags),
        faces=per_tag(mesh.face_tags),
        n_tets=mesh.n_tets,
    )


def write_vtk(mesh, path, title="tetrahedral shell mesh"):
    """Legacy ASCII VTK export (UNSTRUCTURED_GRID, cell type 10).

    Vertices are written exactly in their stored order; the boundary tag
    goes along as point data for visual inspection.
    """
    nv = mesh.n_vertices
    nt = mesh.n_tets
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y, z in mesh.vertices:
            fh.write("%.17g %.17g %.17g\n" % (x, y, z))
        fh.write(f"CELLS {nt} {5 * nt}\n")
        for a, b, c, d in mesh.tets:
            fh.write("4 %d %d %d %d\n" % (a, b, c, d))
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("10\n" * nt)
        fh.write(f"POINT_DATA {nv}\n")
        fh.write("SCALARS boundary_tag int 1\n")
        fh.write("LOOKUP_TABLE default\n")
        fh.write("".join("%d\n" % t for t in mesh.vertex_tags))
