"""Element assembly of the mass, stiffness, and impedance boundary matrices.

All volume integrands are polynomials of degree at most two per tet, so the
closed-form barycentric moments integrate them exactly; the impedance
surface integrands are likewise quadratic on each inner-boundary triangle.
Element contributions are emitted element-major into a stable
sort-and-reduce, which makes every assembled matrix bitwise deterministic
and bitwise symmetric.
"""

from dataclasses import dataclass

import numpy as np

from .derham import tet_geometry
from .mesh import GAMMA_I
from .sparsela import SparseMatrix

_LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
_LOCAL_FACES = np.array([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])


@dataclass(frozen=True)
class SystemMatrices:
    """Assembled Gram matrices, nodal stiffness, and impedance matrix."""

    M_v: SparseMatrix
    M_e: SparseMatrix
    M_f: SparseMatrix
    L_v: SparseMatrix
    Z_e: SparseMatrix
    gamma: float


def _emit(rows, cols, vals, shape):
    rows = rows.ravel()
    cols = cols.ravel()
    vals = vals.ravel()
    keep = (rows >= 0) & (cols >= 0)
    return SparseMatrix.from_coo(rows[keep], cols[keep], vals[keep], shape)


def _mirror_upper(blocks):
    """Copy the upper triangle of (nt, k, k) blocks onto the lower one.

    Local matrices are symmetric analytically; mirroring makes them
    symmetric bitwise, so the assembled matrix is too (element-major
    emission sums both orientations in the same order).
    """
    k = blocks.shape[1]
    iu, ju = np.triu_indices(k, 1)
    blocks[:, ju, iu] = blocks[:, iu, ju]


def _lambda_moments(vol):
    """Integrals of lambda_a * lambda_b over each tet: V (1 + delta_ab) / 20."""
    w = np.full((vol.size, 4, 4), 1.0 / 20.0)
    w[:, np.arange(4), np.arange(4)] = 1.0 / 10.0
    return w * vol[:, None, None]


def _check_volumes(vol):
    if (vol <= 0.0).any():
        bad = int(np.argmin(vol))
        raise ValueError(f"degenerate tet {bad}: volume {vol[bad]:.3e}")


def _sorted_edge_slots(mesh):
    """Local edge endpoints per tet, ordered by global vertex index."""
    g = mesh.tets[:, _LOCAL_EDGES]  # (nt, 6, 2) global ids
    swap = g[:, :, 0] > g[:, :, 1]
    lo = np.where(swap, _LOCAL_EDGES[:, 1], _LOCAL_EDGES[:, 0])
    hi = np.where(swap, _LOCAL_EDGES[:, 0], _LOCAL_EDGES[:, 1])
    return lo, hi


def _sorted_face_slots(mesh):
    """Local face corners per tet, ordered by global vertex index."""
    g = mesh.tets[:, _LOCAL_FACES]  # (nt, 4, 3)
    order = np.argsort(g, axis=2)
    return np.take_along_axis(
        np.broadcast_to(_LOCAL_FACES, g.shape), order, axis=2
    )


def assemble_mass(mesh, dofs, space):
    """Gram matrix of one discrete space ("vertex", "edge", or "face")."""
    grads, vol = tet_geometry(mesh)
    _check_volumes(vol)
    w = _lambda_moments(vol)

    if space == "vertex":
        rows = dofs.vertex_dof[mesh.tets][:, :, None]
        cols = dofs.vertex_dof[mesh.tets][:, None, :]
        shape = (dofs.n_vertex, dofs.n_vertex)
        return _emit(np.broadcast_to(rows, w.shape), np.broadcast_to(cols, w.shape),
                     w, shape)

    if space == "edge":
        gram = np.einsum("tad,tbd->tab", grads, grads)
        lo, hi = _sorted_edge_slots(mesh)
        t = np.arange(mesh.n_tets)[:, None, None]
        i = lo[:, :, None]
        j = hi[:, :, None]
        k = lo[:, None, :]
        l = hi[:, None, :]
        vals = (
            gram[t, j, l] * w[t, i, k]
            - gram[t, j, k] * w[t, i, l]
            - gram[t, i, l] * w[t, j, k]
            + gram[t, i, k] * w[t, j, l]
        )
        _mirror_upper(vals)
        edofs = dofs.edge_dof[mesh.tet_edges]
        shape = (dofs.n_edge, dofs.n_edge)
        return _emit(
            np.broadcast_to(edofs[:, :, None], vals.shape),
            np.broadcast_to(edofs[:, None, :], vals.shape),
            vals, shape,
        )

    if space == "face":
        slots = _sorted_face_slots(mesh)  # (nt, 4, 3) ascending by global id
        # Whitney 2-form coefficient vectors u_m = grad x grad of the other two
        u = np.empty((mesh.n_tets, 4, 3, 3))
        # gather per-corner gradients (nt, 4, 3corners, 3)
        gf = np.take_along_axis(
            grads[:, None, :, :].repeat(4, axis=1),
            slots[:, :, :, None].repeat(3, axis=3), axis=2,
        )
        u[:, :, 0] = np.cross(gf[:, :, 1], gf[:, :, 2])
        u[:, :, 1] = np.cross(gf[:, :, 2], gf[:, :, 0])
        u[:, :, 2] = np.cross(gf[:, :, 0], gf[:, :, 1])

        t = np.arange(mesh.n_tets)
        vals = np.zeros((mesh.n_tets, 4, 4))
        for f in range(4):
            for fp in range(4):
                acc = np.zeros(mesh.n_tets)
                for m in range(3):
                    for mp in range(3):
                        dot = np.einsum("td,td->t", u[:, f, m], u[:, fp, mp])
                        acc += dot * w[t, slots[:, f, m], slots[:, fp, mp]]
                vals[:, f, fp] = 4.0 * acc
        _mirror_upper(vals)
        fdofs = dofs.face_dof[mesh.tet_faces]
        shape = (dofs.n_face, dofs.n_face)
        return _emit(
            np.broadcast_to(fdofs[:, :, None], vals.shape),
            np.broadcast_to(fdofs[:, None, :], vals.shape),
            vals, shape,
        )

    raise ValueError(f"unknown space {space!r}")


def _nodal_stiffness(mesh, vertex_dof, n_dof):
    grads, vol = tet_geometry(mesh)
    _check_volumes(vol)
    vals = np.einsum("tad,tbd->tab", grads, grads) * vol[:, None, None]
    _mirror_upper(vals)
    rows = vertex_dof[mesh.tets]
    return _emit(
        np.broadcast_to(rows[:, :, None], vals.shape),
        np.broadcast_to(rows[:, None, :], vals.shape),
        vals, (n_dof, n_dof),
    )


def assemble_stiffness_nodal(mesh, dofs):
    """grad-grad stiffness on the interior vertex dofs.

    Dirichlet data enters through boundary-value lifting by the caller; the
    full-vertex variant below provides the coupling terms for that.
    """
    return _nodal_stiffness(mesh, dofs.vertex_dof, dofs.n_vertex)


def assemble_stiffness_all_vertices(mesh):
    """grad-grad stiffness over every vertex, no boundary restriction."""
    ident = np.arange(mesh.n_vertices, dtype=np.int32)
    return _nodal_stiffness(mesh, ident, mesh.n_vertices)


def _triangle_gradients(tri):
    """In-plane gradients of the triangle barycentric functions.

    tri is (m, 3, 3); returns gradients (m, 3, 3) and areas (m,).
    """
    e0 = tri[:, 2] - tri[:, 1]
    e1 = tri[:, 0] - tri[:, 2]
    e2 = tri[:, 1] - tri[:, 0]
    nvec = np.cross(e2, -e1)
    area2 = np.linalg.norm(nvec, axis=1)
    nhat = nvec / area2[:, None]
    g = np.stack(
        (np.cross(nhat, e0), np.cross(nhat, e1), np.cross(nhat, e2)), axis=1
    )
    return g / area2[:, None, None], 0.5 * area2


def assemble_impedance(mesh, dofs, gamma):
    """Impedance matrix on edge dofs: (1 + gamma) times the tangential
    edge-basis Gram matrix over the inner-sphere triangles.

    Only the three edges of each inner-boundary triangle have a nonzero
    tangential trace there, so each triangle contributes a 3x3 block.
    """
    if not gamma > 0.0:
        raise ValueError("dissipation parameter gamma must be positive")
    shape = (dofs.n_edge, dofs.n_edge)
    gi = np.flatnonzero(mesh.face_tags == GAMMA_I)
    if gi.size == 0:
        return SparseMatrix.from_coo([], [], [], shape)

    tri = mesh.vertices[mesh.faces[gi]]
    g, area = _triangle_gradients(tri)
    gram = np.einsum("tad,tbd->tab", g, g)
    w = np.full((gi.size, 3, 3), 1.0 / 12.0)
    w[:, np.arange(3), np.arange(3)] = 1.0 / 6.0
    w *= area[:, None, None]

    # face vertices are ascending, so the local pairs (0,1), (0,2), (1,2)
    # already follow the global edge orientation
    pairs = np.array([(0, 1), (0, 2), (1, 2)])
    t = np.arange(gi.size)[:, None, None]
    i = pairs[:, 0][None, :, None]
    j = pairs[:, 1][None, :, None]
    k = pairs[:, 0][None, None, :]
    l = pairs[:, 1][None, None, :]
    vals = (1.0 + gamma) * (
        gram[t, j, l] * w[t, i, k]
        - gram[t, j, k] * w[t, i, l]
        - gram[t, i, l] * w[t, j, k]
        + gram[t, i, k] * w[t, j, l]
    )
    _mirror_upper(vals)
    edofs = dofs.edge_dof[mesh.face_edges[gi]]
    return _emit(
        np.broadcast_to(edofs[:, :, None], vals.shape),
        np.broadcast_to(edofs[:, None, :], vals.shape),
        vals, shape,
    )


def assemble_system(mesh, dofs, gamma):
    """All matrices the evolution needs, in one pass."""
    return SystemMatrices(
        M_v=assemble_mass(mesh, dofs, "vertex"),
        M_e=assemble_mass(mesh, dofs, "edge"),
        M_f=assemble_mass(mesh, dofs, "face"),
        L_v=assemble_stiffness_nodal(mesh, dofs),
        Z_e=assemble_impedance(mesh, dofs, gamma),
        gamma=gamma,
    )
