"""Finite element simulation of exponentially decaying electromagnetic
fields in a spherical shell with an impedance (absorbing) inner boundary.

Lowest-order Whitney elements on a structured tetrahedral shell mesh, a
structure-preserving Crank-Nicolson integrator, and in-house sparse
CG/MINRES solvers with an optional compiled matvec kernel.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .assembly import (
    SystemMatrices,
    assemble_impedance,
    assemble_mass,
    assemble_stiffness_nodal,
    assemble_system,
)
from .derham import (
    DofMaps,
    IncidenceMatrices,
    enumerate_dofs,
    evaluate_field,
    incidence,
    interpolate_edge_field,
    interpolate_face_field,
)
from .evolve import (
    EvolutionOperator,
    SimConfig,
    SimReport,
    build_operator,
    cn_step,
    lemma_monitor,
    run_simulation,
    setup_problem,
)
from .fields import (
    HarmonicForm,
    discrete_harmonic_form,
    eval_B_star,
    eval_E_star,
    initial_B,
    project_initial_E,
    r_of_gamma,
)
from .mesh import (
    GAMMA_I,
    GAMMA_O,
    INTERIOR,
    LatticeSpec,
    Mesh,
    build_shell_mesh,
    mesh_from_cells,
    mesh_statistics,
    write_vtk,
)
from .sparsela import (
    BlockVector,
    NonConvergenceError,
    SparseMatrix,
    cg_solve,
    minres_solve,
)

__all__ = [
    "BlockVector",
    "DofMaps",
    "EvolutionOperator",
    "GAMMA_I",
    "GAMMA_O",
    "HarmonicForm",
    "INTERIOR",
    "IncidenceMatrices",
    "LatticeSpec",
    "Mesh",
    "NonConvergenceError",
    "SimConfig",
    "SimReport",
    "SparseMatrix",
    "SystemMatrices",
    "assemble_impedance",
    "assemble_mass",
    "assemble_stiffness_nodal",
    "assemble_system",
    "build_operator",
    "build_shell_mesh",
    "cg_solve",
    "cn_step",
    "discrete_harmonic_form",
    "enumerate_dofs",
    "eval_B_star",
    "eval_E_star",
    "evaluate_field",
    "incidence",
    "initial_B",
    "interpolate_edge_field",
    "interpolate_face_field",
    "kernel_backend",
    "lemma_monitor",
    "mesh_from_cells",
    "mesh_statistics",
    "minres_solve",
    "project_initial_E",
    "r_of_gamma",
    "run_simulation",
    "setup_problem",
    "write_vtk",
]
