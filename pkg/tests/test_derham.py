import numpy as np
import pytest

from adsfem.derham import (
    enumerate_dofs,
    evaluate_field,
    incidence,
    interpolate_edge_field,
    interpolate_face_field,
    interpolate_vertex_field,
    locate_point,
)
from adsfem.mesh import GAMMA_I, GAMMA_O, LatticeSpec, build_shell_mesh, mesh_from_cells


@pytest.fixture(scope="module")
def tet_dofs(single_tet):
    return enumerate_dofs(single_tet)


@pytest.fixture(scope="module")
def tet_inc(single_tet, tet_dofs):
    return incidence(single_tet, tet_dofs)


class TestEnumeration:
    def test_single_tet_untagged(self, tet_dofs):
        assert tet_dofs.n_vertex == 4
        assert tet_dofs.n_edge == 6
        assert tet_dofs.n_face == 4

    def test_all_boundary_vertices_empty_space(self):
        verts = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        tags = np.full(4, GAMMA_I, dtype=np.int8)
        mesh = mesh_from_cells(verts, np.array([[0, 1, 2, 3]]), vertex_tags=tags)
        dofs = enumerate_dofs(mesh)
        assert dofs.n_vertex == 0

    def test_j3_exclusions(self, mesh_j3, dofs_j3):
        n_gi = int((mesh_j3.vertex_tags == GAMMA_I).sum())
        n_go = int((mesh_j3.vertex_tags == GAMMA_O).sum())
        assert dofs_j3.n_vertex == 728 - n_gi - n_go
        assert dofs_j3.n_edge == int((mesh_j3.edge_tags != GAMMA_O).sum())
        assert dofs_j3.n_face == int((mesh_j3.face_tags != GAMMA_O).sum())
        # inner-sphere faces keep their dofs
        gi_faces = np.flatnonzero(mesh_j3.face_tags == GAMMA_I)
        assert (dofs_j3.face_dof[gi_faces] >= 0).all()

    def test_deterministic_ordering(self, mesh_j3, dofs_j3):
        again = enumerate_dofs(mesh_j3)
        assert np.array_equal(again.edge_entities, dofs_j3.edge_entities)
        assert (np.diff(dofs_j3.edge_entities) > 0).all()

    def test_geometry_fields(self, tet_dofs, single_tet):
        lengths = tet_dofs.edge_length
        assert lengths.shape == (6,)
        tangents = tet_dofs.edge_tangent
        assert np.allclose(np.linalg.norm(tangents, axis=1), 1.0)
        # tangent points from lower to higher vertex index
        e0 = single_tet.edges[tet_dofs.edge_entities[0]]
        direction = single_tet.vertices[e0[1]] - single_tet.vertices[e0[0]]
        assert np.allclose(
            tangents[0], direction / np.linalg.norm(direction)
        )


class TestIncidence:
    def test_single_tet_face_row(self, single_tet, tet_dofs, tet_inc):
        # face (x0, x1, x2): edges (0,1), (1,2), (0,2) get (+1, +1, -1)
        face_id = None
        for fid, f in enumerate(single_tet.faces):
            if tuple(f) == (0, 1, 2):
                face_id = fid
        row = tet_inc.d_curl.to_dense()[tet_dofs.face_dof[face_id]]
        eid = {tuple(e): i for i, e in enumerate(map(tuple, single_tet.edges))}
        assert row[tet_dofs.edge_dof[eid[(0, 1)]]] == 1.0
        assert row[tet_dofs.edge_dof[eid[(1, 2)]]] == 1.0
        assert row[tet_dofs.edge_dof[eid[(0, 2)]]] == -1.0

    def test_grad_rows_structure(self, mesh_j3, dofs_j3, inc_j3):
        counts = np.diff(inc_j3.d_grad.indptr)
        assert counts.max() <= 2
        # inner-sphere edges have both endpoints constrained: empty rows
        gi_edges = dofs_j3.edge_dof[
            np.flatnonzero(mesh_j3.edge_tags == GAMMA_I)
        ]
        assert (counts[gi_edges] == 0).all()

    def test_curl_rows_structure(self, mesh_j3, dofs_j3, inc_j3):
        counts = np.diff(inc_j3.d_curl.indptr)
        free_edges = dofs_j3.edge_dof[mesh_j3.face_edges[dofs_j3.face_entities]]
        full = (free_edges >= 0).all(axis=1)
        assert (counts[np.flatnonzero(full)] == 3).all()

    def test_integer_entries(self, inc_j3):
        for mat in (inc_j3.d_grad, inc_j3.d_curl):
            assert set(np.unique(mat.data)) <= {-1.0, 1.0}

    def test_complex_identity_integer(self, inc_j3):
        assert inc_j3.complex_product_max_abs() == 0

    def test_complex_identity_single_tet(self, tet_inc):
        assert tet_inc.complex_product_max_abs() == 0


class TestInterpolation:
    def test_constant_edge_field(self, single_tet, tet_dofs):
        # circulation of a constant field along edge e is |e| (c . tau_e)
        c = np.array([0.3, -1.2, 0.7])
        coeff = interpolate_edge_field(lambda p: np.broadcast_to(c, p.shape),
                                       single_tet, tet_dofs)
        expected = tet_dofs.edge_length * (tet_dofs.edge_tangent @ c)
        assert np.abs(coeff - expected).max() <= 1e-14

    def test_gradient_commutes(self, mesh_j3, dofs_j3, inc_j3):
        # smooth q vanishing on the boundary: interpolating grad q must
        # equal D_grad applied to the vertex interpolant, to quadrature
        # accuracy; for a piecewise linear hat it is exact
        rng = np.random.default_rng(0)
        q_nodal = rng.standard_normal(dofs_j3.n_vertex)
        values = np.zeros(mesh_j3.n_vertices)
        values[dofs_j3.vertex_entities] = q_nodal

        ents = mesh_j3.edges[dofs_j3.edge_entities]
        direct = values[ents[:, 1]] - values[ents[:, 0]]
        assert np.array_equal(direct, inc_j3.d_grad @ q_nodal)

    def test_linear_gradient_exact(self, single_tet, tet_dofs, tet_inc):
        # q = a . x is linear, grad q constant: quadrature is exact
        a = np.array([1.0, 2.0, -0.5])
        q_nodal = interpolate_vertex_field(lambda p: p @ a, single_tet, tet_dofs)
        coeff = interpolate_edge_field(
            lambda p: np.broadcast_to(a, p.shape), single_tet, tet_dofs
        )
        assert np.abs(coeff - tet_inc.d_grad @ q_nodal).max() <= 1e-13

    def test_constant_face_field(self, single_tet, tet_dofs):
        # flux of a constant field through face f is |f| (c . n_f)
        c = np.array([0.5, 0.25, -1.0])
        coeff = interpolate_face_field(lambda p: np.broadcast_to(c, p.shape),
                                       single_tet, tet_dofs)
        expected = tet_dofs.face_area * (tet_dofs.face_normal @ c)
        assert np.abs(coeff - expected).max() <= 1e-14

    def test_whitney_curl_column(self, single_tet, tet_dofs, tet_inc):
        # interpolating curl(psi_e) onto faces reproduces the e-column of
        # d_curl exactly (Whitney curls are constant per element)
        verts = single_tet.vertices
        grads = np.linalg.inv((verts[1:] - verts[0]).T)
        g = np.vstack((-grads.sum(axis=0), grads))

        for eid, (i, j) in enumerate(map(tuple, single_tet.edges)):
            curl_val = 2.0 * np.cross(g[i], g[j])
            coeff = interpolate_face_field(
                lambda p, c=curl_val: np.broadcast_to(c, p.shape),
                single_tet, tet_dofs,
            )
            col = tet_inc.d_curl.to_dense()[:, tet_dofs.edge_dof[eid]]
            assert np.abs(coeff - col).max() <= 1e-12


class TestEvaluation:
    def test_vertex_space_reproduces_linears(self, single_tet, tet_dofs):
        a = np.array([0.2, -1.0, 0.4])
        coeff = interpolate_vertex_field(lambda p: p @ a, single_tet, tet_dofs)
        pt = np.array([0.2, 0.3, 0.1])
        val = evaluate_field(single_tet, tet_dofs, "vertex", coeff, pt)
        assert abs(val - pt @ a) <= 1e-14

    def test_edge_space_reproduces_constants(self, single_tet, tet_dofs):
        c = np.array([1.0, -2.0, 0.5])
        coeff = interpolate_edge_field(lambda p: np.broadcast_to(c, p.shape),
                                       single_tet, tet_dofs)
        for pt in ([0.25, 0.25, 0.25], [0.1, 0.2, 0.3], [0.6, 0.1, 0.1]):
            val = evaluate_field(single_tet, tet_dofs, "edge", coeff,
                                 np.array(pt))
            assert np.abs(val - c).max() <= 1e-13

    def test_face_space_reproduces_constants(self, single_tet, tet_dofs):
        c = np.array([-0.3, 0.8, 1.1])
        coeff = interpolate_face_field(lambda p: np.broadcast_to(c, p.shape),
                                       single_tet, tet_dofs)
        for pt in ([0.25, 0.25, 0.25], [0.05, 0.5, 0.3]):
            val = evaluate_field(single_tet, tet_dofs, "face", coeff,
                                 np.array(pt))
            assert np.abs(val - c).max() <= 1e-13

    def test_edge_constants_on_shell(self, mesh_j3, dofs_j3):
        c = np.array([0.5, 0.5, -0.5])
        coeff = interpolate_edge_field(lambda p: np.broadcast_to(c, p.shape),
                                       mesh_j3, dofs_j3)
        # away from the outer boundary every edge is free, so constants
        # are reproduced there
        pt = np.array([1.6, 0.2, 0.1])
        val = evaluate_field(mesh_j3, dofs_j3, "edge", coeff, pt)
        assert np.abs(val - c).max() <= 1e-12

    def test_point_outside_returns_none(self, single_tet, tet_dofs):
        out = evaluate_field(single_tet, tet_dofs, "vertex", np.zeros(4),
                             np.array([2.0, 2.0, 2.0]))
        assert out is None
        assert locate_point(single_tet, np.array([-1.0, 0.0, 0.0])) is None

    def test_unknown_space_rejected(self, single_tet, tet_dofs):
        with pytest.raises(ValueError):
            evaluate_field(single_tet, tet_dofs, "volume", np.zeros(1),
                           np.zeros(3))


class TestTangentialTrace:
    def test_outer_boundary_trace_vanishes(self, mesh_j3, dofs_j3):
        # every coefficient vector implicitly carries zeros on the
        # constrained outer edges; the tangential component on an outer
        # face must vanish at its quadrature points
        rng = np.random.default_rng(1)
        coeff = rng.standard_normal(dofs_j3.n_edge)
        go_faces = np.flatnonzero(mesh_j3.face_tags == GAMMA_O)
        for fid in go_faces[:4]:
            tri = mesh_j3.vertices[mesh_j3.faces[fid]]
            nvec = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            nhat = nvec / np.linalg.norm(nvec)
            # strictly interior face points: the containing tet is unique
            for w in ((0.6, 0.2, 0.2), (0.2, 0.6, 0.2), (1 / 3, 1 / 3, 1 / 3)):
                pt = w[0] * tri[0] + w[1] * tri[1] + w[2] * tri[2]
                val = evaluate_field(mesh_j3, dofs_j3, "edge", coeff, pt,
                                     tol=1e-9)
                tang = val - (val @ nhat) * nhat
                assert np.abs(tang).max() <= 1e-12 * max(1.0, np.abs(val).max())
