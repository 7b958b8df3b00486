"""Degrees of freedom, incidence matrices, and Whitney interpolation.

Three lowest-order spaces form the discrete de Rham complex: continuous
piecewise linears on interior vertices (zero on the whole boundary),
Nedelec edge elements with zero tangential trace on the outer sphere, and
Raviart-Thomas face elements with zero normal trace on the outer sphere.
Inner-sphere edges and faces keep their degrees of freedom.

Degrees of freedom are integrals over their entity: the point value at a
vertex, the tangential circulation along an edge, the normal flux through a
face.  With the dual Whitney bases the discrete gradient and curl then act
as pure +-1 incidence matrices and grad/curl commute with interpolation
exactly on piecewise polynomial fields.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import GAMMA_O, INTERIOR
from .sparsela import SparseMatrix, int_spgemm_max_abs

# 3-point Gauss-Legendre on [0, 1], exact through degree 5
_GL3_T = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_GL3_W = np.array([5.0, 8.0, 5.0]) / 18.0

# triangle edge-midpoint rule, exact through degree 2
_TRI3_BARY = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])


@dataclass(frozen=True)
class DofMaps:
    """Global numbering of the three discrete spaces plus entity geometry."""

    vertex_entities: np.ndarray  # mesh vertex index per vertex dof
    edge_entities: np.ndarray
    face_entities: np.ndarray
    vertex_dof: np.ndarray       # inverse maps, -1 where constrained
    edge_dof: np.ndarray
    face_dof: np.ndarray
    edge_length: np.ndarray      # per edge dof
    edge_tangent: np.ndarray     # unit, from lower to higher vertex index
    face_area: np.ndarray        # per face dof
    face_normal: np.ndarray      # unit, right-hand rule on ascending triple

    @property
    def n_vertex(self):
        return self.vertex_entities.size

    @property
    def n_edge(self):
        return self.edge_entities.size

    @property
    def n_face(self):
        return self.face_entities.size


@dataclass(frozen=True)
class IncidenceMatrices:
    """Signed incidence (differential) matrices of the restricted complex.

    d_grad maps vertex dofs to edge dofs (+1 head, -1 tail), d_curl maps
    edge dofs to face dofs (+-1 by the edge orientation inside the
    right-hand ordered face boundary).  Entries are exactly 0 or +-1.
    """

    d_grad: SparseMatrix
    d_curl: SparseMatrix
    d_grad_t: SparseMatrix
    d_curl_t: SparseMatrix

    def complex_product_max_abs(self):
        """max |entry| of d_curl @ d_grad in exact integer arithmetic."""
        rows, cols, vals = self.d_curl.to_coo()
        b = (
            self.d_grad.indptr,
            self.d_grad.indices.astype(np.int64),
            np.rint(self.d_grad.data).astype(np.int64),
        )
        return int_spgemm_max_abs(
            rows, cols, np.rint(vals).astype(np.int64), b, self.d_curl.shape[0]
        )


def enumerate_dofs(mesh):
    """Number the free entities of each space in ascending entity order."""
    v_ent = np.flatnonzero(mesh.vertex_tags == INTERIOR).astype(np.int32)
    e_ent = np.flatnonzero(mesh.edge_tags != GAMMA_O).astype(np.int32)
    f_ent = np.flatnonzero(mesh.face_tags != GAMMA_O).astype(np.int32)

    v_dof = np.full(mesh.n_vertices, -1, dtype=np.int32)
    v_dof[v_ent] = np.arange(v_ent.size)
    e_dof = np.full(mesh.n_edges, -1, dtype=np.int32)
    e_dof[e_ent] = np.arange(e_ent.size)
    f_dof = np.full(mesh.n_faces, -1, dtype=np.int32)
    f_dof[f_ent] = np.arange(f_ent.size)

    evec = mesh.vertices[mesh.edges[e_ent, 1]] - mesh.vertices[mesh.edges[e_ent, 0]]
    elen = np.linalg.norm(evec, axis=1)

    tri = mesh.vertices[mesh.faces[f_ent]]
    nvec = 0.5 * np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = np.linalg.norm(nvec, axis=1)

    return DofMaps(
        vertex_entities=v_ent,
        edge_entities=e_ent,
        face_entities=f_ent,
        vertex_dof=v_dof,
        edge_dof=e_dof,
        face_dof=f_dof,
        edge_length=elen,
        edge_tangent=evec / elen[:, None],
        face_area=area,
        face_normal=nvec / area[:, None],
    )


def incidence(mesh, dofs):
    """Build the discrete gradient and curl of the restricted complex."""
    ne = dofs.n_edge
    nv = dofs.n_vertex
    nf = dofs.n_face

    ents = mesh.edges[dofs.edge_entities]
    tail = dofs.vertex_dof[ents[:, 0]]
    head = dofs.vertex_dof[ents[:, 1]]
    rows = np.concatenate((np.arange(ne), np.arange(ne)))
    cols = np.concatenate((tail, head))
    vals = np.concatenate((-np.ones(ne), np.ones(ne)))
    keep = cols >= 0
    d_grad = SparseMatrix.from_coo(rows[keep], cols[keep], vals[keep], (ne, nv))

    # face (a, b, c) ascending: the boundary runs a->b->c->a, so edges
    # (a,b) and (b,c) enter with +1 and (a,c) with -1; face_edges columns
    # are ordered (ab, ac, bc)
    fe = mesh.face_edges[dofs.face_entities]
    rows = np.repeat(np.arange(nf), 3)
    cols = dofs.edge_dof[fe].ravel()
    vals = np.tile(np.array([1.0, -1.0, 1.0]), nf)
    keep = cols >= 0
    d_curl = SparseMatrix.from_coo(rows[keep], cols[keep], vals[keep], (nf, ne))

    return IncidenceMatrices(
        d_grad=d_grad,
        d_curl=d_curl,
        d_grad_t=d_grad.transpose(),
        d_curl_t=d_curl.transpose(),
    )


def _eval_vector_field(fn, points):
    """Evaluate a vector field on (m, 3) points, tolerating scalar-only callables."""
    try:
        out = np.asarray(fn(points), dtype=np.float64)
        if out.shape == points.shape:
            return out
    except Exception:
        pass
    return np.array([fn(p) for p in points], dtype=np.float64)


def interpolate_edge_field(fn, mesh, dofs):
    """Tangential circulation of ``fn`` along every edge dof.

    Uses the 3-point Gauss rule along each segment, which integrates the
    smooth decaying fields used here far below the element error.
    """
    ents = mesh.edges[dofs.edge_entities]
    p0 = mesh.vertices[ents[:, 0]]
    d = mesh.vertices[ents[:, 1]] - p0
    coeff = np.zeros(dofs.n_edge)
    for t, wq in zip(_GL3_T, _GL3_W):
        vals = _eval_vector_field(fn, p0 + t * d)
        coeff += wq * np.einsum("ij,ij->i", vals, d)
    return coeff


def interpolate_face_field(fn, mesh, dofs):
    """Normal flux of ``fn`` through every face dof (edge-midpoint rule)."""
    tri = mesh.vertices[mesh.faces[dofs.face_entities]]
    nvec = 0.5 * np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    coeff = np.zeros(dofs.n_face)
    for bary in _TRI3_BARY:
        pts = np.einsum("q,iqd->id", bary, tri)
        vals = _eval_vector_field(fn, pts)
        coeff += np.einsum("ij,ij->i", vals, nvec) / 3.0
    return coeff


def interpolate_vertex_field(fn, mesh, dofs):
    """Point values of a scalar function at the vertex dofs."""
    pts = mesh.vertices[dofs.vertex_entities]
    try:
        vals = np.asarray(fn(pts), dtype=np.float64)
        if vals.shape == (pts.shape[0],):
            return vals
    except Exception:
        pass
    return np.array([fn(p) for p in pts], dtype=np.float64)


def tet_geometry(mesh):
    """Barycentric gradients (nt, 4, 3) and volumes (nt,) of every tet."""
    x = mesh.vertices[mesh.tets]
    d = x[:, 1:] - x[:, :1]
    vol = np.linalg.det(d) / 6.0
    inv = np.linalg.inv(d)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:] = inv.transpose(0, 2, 1)
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    return grads, vol


def locate_point(mesh, point, tol=1e-10):
    """Index of a tet containing ``point``, or None if outside the mesh."""
    x = mesh.vertices[mesh.tets]
    d = x[:, 1:] - x[:, :1]
    rhs = point[None, :] - x[:, 0]
    lam = np.linalg.solve(d.transpose(0, 2, 1), rhs[:, :, None])[:, :, 0]
    bary = np.column_stack((1.0 - lam.sum(axis=1), lam))
    worst = bary.min(axis=1)
    best = int(np.argmax(worst))
    if worst[best] < -tol:
        return None
    return best


def evaluate_field(mesh, dofs, space, coefficients, point, tol=1e-10):
    """Whitney expansion of a coefficient vector at one spatial point.

    ``space`` is "vertex", "edge", or "face".  Entities without a degree of
    freedom contribute zero (the homogeneous outer boundary condition).
    Returns None when the point lies outside the mesh.
    """
    point = np.asarray(point, dtype=np.float64)
    k = locate_point(mesh, point, tol)
    if k is None:
        return None
    verts = mesh.tets[k]
    x = mesh.vertices[verts]
    d = (x[1:] - x[0]).T
    dinv = np.linalg.inv(d)
    lam_123 = dinv @ (point - x[0])
    lam = np.concatenate(([1.0 - lam_123.sum()], lam_123))
    g = np.vstack((-dinv.sum(axis=0), dinv))

    if space == "vertex":
        dof = dofs.vertex_dof[verts]
        c = np.where(dof >= 0, coefficients[np.maximum(dof, 0)], 0.0)
        return float(lam @ c)

    if space == "edge":
        value = np.zeros(3)
        for a in range(4):
            for b in range(a + 1, 4):
                i, j = (a, b) if verts[a] < verts[b] else (b, a)
                dof = dofs.edge_dof[_edge_id(mesh, k, a, b)]
                if dof < 0:
                    continue
                value += coefficients[dof] * (lam[i] * g[j] - lam[j] * g[i])
        return value

    if space == "face":
        value = np.zeros(3)
        local_faces = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))
        for lf, slots in enumerate(local_faces):
            dof = dofs.face_dof[mesh.tet_faces[k, lf]]
            if dof < 0:
                continue
            order = sorted(slots, key=lambda s: verts[s])
            a, b, c = order
            w = (
                lam[a] * np.cross(g[b], g[c])
                + lam[b] * np.cross(g[c], g[a])
                + lam[c] * np.cross(g[a], g[b])
            )
            value += coefficients[dof] * 2.0 * w
        return value

    raise ValueError(f"unknown space {space!r}")


_LOCAL_EDGE_SLOT = {
    (0, 1): 0, (0, 2): 1, (0, 3): 2, (1, 2): 3, (1, 3): 4, (2, 3): 5,
}


def _edge_id(mesh, tet, a, b):
    slot = _LOCAL_EDGE_SLOT[(a, b) if a < b else (b, a)]
    return mesh.tet_edges[tet, slot]
