import numpy as np
import pytest

from adsfem.mesh import (
    GAMMA_I,
    GAMMA_O,
    INTERIOR,
    LatticeSpec,
    MeshConstructionError,
    build_shell_mesh,
    mesh_from_cells,
    mesh_statistics,
    signed_volumes,
    write_vtk,
)


def closed_form_vertex_count(n):
    return (n + 1) ** 3 - (n // 4 - 1) ** 3


class TestLatticeSpec:
    def test_rejects_small_J(self):
        with pytest.raises(ValueError):
            LatticeSpec(1)
        with pytest.raises(ValueError):
            LatticeSpec(0)

    def test_accepts_boundary_J(self):
        spec = LatticeSpec(2)
        assert spec.n == 4
        assert spec.n % 4 == 0

    def test_cell_counts(self):
        assert LatticeSpec(3).n == 8
        assert LatticeSpec(3).h == 0.125

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            LatticeSpec(3, R=1.0)


class TestShellConstruction:
    def test_vertex_count_j3(self, mesh_j3):
        assert mesh_j3.n_vertices == 728

    def test_vertex_count_j4(self):
        mesh = build_shell_mesh(LatticeSpec(4))
        assert mesh.n_vertices == 4886

    @pytest.mark.parametrize("J,expected", [(3, 728), (4, 4886)])
    def test_closed_form_matches(self, J, expected):
        assert closed_form_vertex_count(2**J) == expected

    def test_tet_count_j3(self, mesh_j3):
        # 6 tets per cell, 8^3 cells minus the 2^3 cavity block
        assert mesh_j3.n_tets == 6 * (8**3 - 2**3) == 3024

    def test_removed_interior_nodes_j3(self):
        # brute-force lattice enumeration: nodes strictly inside the cavity
        n = 8
        idx = np.arange(n + 1)
        inside = np.abs(idx - n // 2) < n // 8
        removed = int(np.sum(np.multiply.outer(np.multiply.outer(inside, inside), inside)))
        assert removed == (n // 4 - 1) ** 3 == 1
        assert (n + 1) ** 3 - removed == 728

    def test_positive_volumes(self, mesh_j3):
        vols = signed_volumes(mesh_j3.vertices, mesh_j3.tets)
        assert vols.min() > 0.0

    def test_mapped_radii_within_shell(self, mesh_j3):
        radii = np.linalg.norm(mesh_j3.vertices, axis=1)
        assert radii.min() >= 1.0 - 1e-12
        assert radii.max() <= 4.0 + 1e-12

    def test_boundary_vertices_on_spheres(self, mesh_j3):
        radii = np.linalg.norm(mesh_j3.vertices, axis=1)
        inner = radii[mesh_j3.vertex_tags == GAMMA_I]
        outer = radii[mesh_j3.vertex_tags == GAMMA_O]
        assert np.abs(inner - 1.0).max() <= 1e-12
        assert np.abs(outer - 4.0).max() <= 1e-12

    def test_j2_boundary_case_valid(self):
        mesh = build_shell_mesh(LatticeSpec(2))
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.abs(radii[mesh.vertex_tags == GAMMA_I] - 1.0).max() <= 1e-12
        assert np.abs(radii[mesh.vertex_tags == GAMMA_O] - 4.0).max() <= 1e-12
        assert signed_volumes(mesh.vertices, mesh.tets).min() > 0.0

    def test_custom_outer_radius(self):
        mesh = build_shell_mesh(LatticeSpec(3, R=6.0))
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.abs(radii[mesh.vertex_tags == GAMMA_O] - 6.0).max() <= 1e-12


class TestConformity:
    def test_faces_shared_by_one_or_two_tets(self, mesh_j3):
        assert set(np.unique(mesh_j3.face_tet_count)) == {1, 2}

    def test_boundary_faces_tagged(self, mesh_j3):
        boundary = mesh_j3.face_tet_count == 1
        assert (mesh_j3.face_tags[boundary] != INTERIOR).all()
        assert (mesh_j3.face_tags[~boundary] == INTERIOR).all()

    def test_kuhn_compatibility_exact(self, mesh_j3):
        # exhaustive integer check: every interior lattice-cell face is cut
        # into the same two triangles from both sides, which is equivalent
        # to every mesh face appearing in exactly 1 or 2 tets with boundary
        # faces only on the tagged spheres -- plus no duplicated tets
        tets_sorted = np.sort(mesh_j3.tets, axis=1)
        keys = set(map(tuple, tets_sorted.tolist()))
        assert len(keys) == mesh_j3.n_tets
        interior = mesh_j3.face_tet_count == 2
        boundary_faces = (~interior).sum()
        gi = (mesh_j3.face_tags == GAMMA_I).sum()
        go = (mesh_j3.face_tags == GAMMA_O).sum()
        assert gi + go == boundary_faces

    def test_gamma_i_surface_euler_characteristic(self, mesh_j3):
        # extract the inner-boundary surface and check V - E + F = 2
        gi_faces = mesh_j3.faces[mesh_j3.face_tags == GAMMA_I]
        v = np.unique(gi_faces).size
        edges = set()
        for a, b, c in gi_faces:
            edges.update({(a, b), (a, c), (b, c)})
        assert v - len(edges) + gi_faces.shape[0] == 2

    def test_edge_tags_derive_from_faces(self, mesh_j3):
        gi_edges = np.unique(
            mesh_j3.face_edges[mesh_j3.face_tags == GAMMA_I]
        )
        assert (mesh_j3.edge_tags[gi_edges] == GAMMA_I).all()
        tagged = np.flatnonzero(mesh_j3.edge_tags == GAMMA_I)
        assert np.array_equal(np.sort(gi_edges), tagged)


class TestStatistics:
    def test_single_tet_counts(self, single_tet):
        stats = mesh_statistics(single_tet)
        assert stats.n_vertices == 4
        assert sum(stats.edges.values()) == 6
        assert sum(stats.faces.values()) == 4
        assert stats.n_tets == 1

    def test_j3_counts(self, mesh_j3):
        stats = mesh_statistics(mesh_j3)
        assert stats.n_vertices == 728
        # inner cavity surface: 3^3 - 1 nodes; outer cube surface: 9^3 - 7^3
        assert stats.vertices["gamma_i"] == 26
        assert stats.vertices["gamma_o"] == 386
        assert stats.vertices["interior"] == 728 - 26 - 386


class TestFromCells:
    def test_rejects_inverted_tet(self):
        verts = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        with pytest.raises(MeshConstructionError):
            mesh_from_cells(verts, np.array([[0, 2, 1, 3]]))

    def test_untagged_mesh_has_no_constraints(self, mesh_j3):
        plain = mesh_from_cells(mesh_j3.vertices, mesh_j3.tets)
        assert (plain.vertex_tags == INTERIOR).all()
        assert (plain.edge_tags == INTERIOR).all()


class TestVtkExport:
    def test_legacy_format(self, single_tet, tmp_path):
        path = tmp_path / "tet.vtk"
        write_vtk(single_tet, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[2] == "ASCII"
        assert lines[3] == "DATASET UNSTRUCTURED_GRID"
        assert lines[4] == "POINTS 4 double"
        idx = lines.index("CELLS 1 5")
        assert lines[idx + 1] == "4 0 1 2 3"
        assert lines[lines.index("CELL_TYPES 1") + 1] == "10"

    def test_vertex_order_preserved(self, mesh_j3, tmp_path):
        path = tmp_path / "shell.vtk"
        write_vtk(mesh_j3, path)
        lines = path.read_text().splitlines()
        got = np.array([float(t) for t in lines[5].split()])
        assert np.array_equal(got, mesh_j3.vertices[0])
