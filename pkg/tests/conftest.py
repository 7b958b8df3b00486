import numpy as np
import pytest

from adsfem.assembly import assemble_system
from adsfem.derham import enumerate_dofs, incidence
from adsfem.evolve import SimConfig, run_simulation, setup_problem
from adsfem.fields import discrete_harmonic_form
from adsfem.mesh import LatticeSpec, build_shell_mesh, mesh_from_cells


@pytest.fixture(scope="session")
def mesh_j3():
    return build_shell_mesh(LatticeSpec(3))


@pytest.fixture(scope="session")
def dofs_j3(mesh_j3):
    return enumerate_dofs(mesh_j3)


@pytest.fixture(scope="session")
def inc_j3(mesh_j3, dofs_j3):
    return incidence(mesh_j3, dofs_j3)


@pytest.fixture(scope="session")
def mats_j3(mesh_j3, dofs_j3):
    return assemble_system(mesh_j3, dofs_j3, gamma=0.05)


@pytest.fixture(scope="session")
def harmonic_j3(mesh_j3, dofs_j3, mats_j3):
    return discrete_harmonic_form(mesh_j3, dofs_j3, mats_j3)


@pytest.fixture(scope="session")
def problem_j3():
    return setup_problem(SimConfig(J=3))


@pytest.fixture(scope="session")
def report_j3(problem_j3):
    return run_simulation(SimConfig(J=3), problem=problem_j3)


@pytest.fixture(scope="session")
def single_tet():
    """One positively oriented reference tet, untagged."""
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    return mesh_from_cells(verts, np.array([[0, 1, 2, 3]]))
