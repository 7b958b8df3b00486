"""Block evolution operator, Crank-Nicolson stepping, and invariant monitors.

The semi-discrete system couples the edge field E, the face field B, and
the auxiliary vertex multiplier p.  Its generator splits into a skew block
operator plus the symmetric positive semidefinite impedance term, so the
Crank-Nicolson step is an M-norm contraction.  Left-multiplying the step
system by diag(I, -I, -I) makes it symmetric, and MINRES solves it.

The multiplier p is kept as an evolved unknown even though it provably
stays zero for divergence-free initial data; that turns the conservation
statement into a runtime-checkable property instead of an assumption.
"""

import time
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_system
from .derham import (
    enumerate_dofs,
    incidence,
    interpolate_edge_field,
)
from .fields import (
    discrete_harmonic_form,
    eval_E_star,
    initial_B,
    project_initial_E,
    r_of_gamma,
)
from .mesh import LatticeSpec, build_shell_mesh
from .sparsela import (
    BlockDiagonalPreconditioner,
    BlockVector,
    SparseMatrix,
    block_matrix,
    minres_solve,
)


@dataclass(frozen=True)
class SimConfig:
    """Run configuration; defaults reproduce the baseline experiment."""

    J: int = 3
    gamma: float = 0.05
    tau: float = 0.1
    steps: int = 20
    outer_radius: float = 4.0
    cg_tol: float = 1e-12
    minres_tol: float = 1e-10
    precondition: bool = True
    zero_impedance: bool = False
    unprojected_initial: bool = False

    def __post_init__(self):
        if self.J < 2:
            raise ValueError("J must be at least 2")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not (self.cg_tol > 0.0 and self.minres_tol > 0.0):
            raise ValueError("solver tolerances must be positive")


@dataclass(frozen=True)
class EvolutionOperator:
    """Symmetrized Crank-Nicolson step matrices.

    ``lhs`` and ``rhs`` hold J (M/tau +- (A + Z)/2) with J = diag(I,-I,-I),
    so ``lhs`` is symmetric (bitwise: paired off-diagonal blocks are stored
    as exact transposes of each other) and one step solves
    lhs u_k = rhs u_{k-1}.

    ``preconditioner`` is the SPD block operator |diag(J lhs blocks)|,
    i.e. (M_e/tau + Z/2, M_f/tau, M_v/tau); with it the preconditioned
    spectrum sits in +-[1, sqrt(1 + s^2)], leaving a unit gap at zero, so
    MINRES iteration counts stay bounded as the mesh refines much better
    than with plain diagonal scaling.
    """

    lhs: SparseMatrix
    rhs: SparseMatrix
    preconditioner: BlockDiagonalPreconditioner
    tau: float
    gamma: float
    n_edge: int
    n_face: int
    n_vertex: int


def build_skew_operator(matrices, inc):
    """Matrix of the skew coupling block operator (no mass, no impedance).

    Row blocks (E, B, p): [[0, -K^T M_f, M_e G], [M_f K, 0, 0],
    [-G^T M_e, 0, 0]] with K, G the incidence matrices.
    """
    c_eb = inc.d_curl_t.matmat(matrices.M_f)   # K^T M_f
    c_be = c_eb.transpose()                    # equals M_f K
    c_ep = matrices.M_e.matmat(inc.d_grad)     # M_e G
    c_pe = c_ep.transpose()                    # equals G^T M_e
    sizes = [matrices.M_e.shape[0], matrices.M_f.shape[0], matrices.M_v.shape[0]]
    return block_matrix(
        {
            (0, 1): c_eb.scaled(-1.0),
            (0, 2): c_ep,
            (1, 0): c_be,
            (2, 0): c_pe.scaled(-1.0),
        },
        sizes, sizes,
    )


def build_operator(matrices, inc, tau, zero_impedance=False):
    """Assemble the symmetrized Crank-Nicolson left- and right-hand matrices.

    ``zero_impedance`` drops the dissipative boundary term, turning the
    step into an exact M-norm isometry (the conservation control mode).
    """
    if not tau > 0.0:
        raise ValueError("time step tau must be positive")
    me, mf, mv, z = matrices.M_e, matrices.M_f, matrices.M_v, matrices.Z_e
    c_eb = inc.d_curl_t.matmat(mf)
    c_be = c_eb.transpose()
    c_ep = me.matmat(inc.d_grad)
    c_pe = c_ep.transpose()
    sizes = [me.shape[0], mf.shape[0], mv.shape[0]]

    ee_lhs = me.scaled(1.0 / tau)
    ee_rhs = me.scaled(1.0 / tau)
    if not zero_impedance:
        ee_lhs = ee_lhs + z.scaled(0.5)
        ee_rhs = ee_rhs - z.scaled(0.5)

    lhs = block_matrix(
        {
            (0, 0): ee_lhs,
            (0, 1): c_eb.scaled(-0.5),
            (0, 2): c_ep.scaled(0.5),
            (1, 0): c_be.scaled(-0.5),
            (1, 1): mf.scaled(-1.0 / tau),
            (2, 0): c_pe.scaled(0.5),
            (2, 2): mv.scaled(-1.0 / tau),
        },
        sizes, sizes,
    )
    rhs = block_matrix(
        {
            (0, 0): ee_rhs,
            (0, 1): c_eb.scaled(0.5),
            (0, 2): c_ep.scaled(-0.5),
            (1, 0): c_be.scaled(0.5),
            (1, 1): mf.scaled(-1.0 / tau),
            (2, 0): c_pe.scaled(-0.5),
            (2, 2): mv.scaled(-1.0 / tau),
        },
        sizes, sizes,
    )
    precond = BlockDiagonalPreconditioner([ee_lhs, mf.scaled(1.0 / tau),
                                           mv.scaled(1.0 / tau)])
    return EvolutionOperator(
        lhs=lhs, rhs=rhs, preconditioner=precond, tau=tau,
        gamma=matrices.gamma,
        n_edge=sizes[0], n_face=sizes[1], n_vertex=sizes[2],
    )


def cn_step(op, u_prev, tol=1e-10, precondition=True):
    """Advance one Crank-Nicolson step; returns (u_next, SolveInfo).

    The previous state warm-starts MINRES.  Solver failures carry the
    failing context in the exception chain.
    """
    rhs = op.rhs @ u_prev.data
    x, info = minres_solve(
        op.lhs, rhs, tol=tol, x0=u_prev.data,
        preconditioner=op.preconditioner if precondition else None,
        jacobi=not precondition,
    )
    return BlockVector(x, op.n_edge, op.n_face, op.n_vertex), info


@dataclass
class StepRecord:
    step: int
    time: float
    e_norm: float
    b_norm: float
    p_norm: float
    energy: float
    minres_iters: int
    div_residual: float
    harmonic_drift: float


@dataclass
class SimReport:
    """Per-step norms and solver statistics of one simulation run."""

    records: list
    e0_norm: float       # ||E_0|| in the M_e norm
    me_e0_norm: float    # euclidean norm of M_e E_0
    config: SimConfig
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class Problem:
    """Everything run_simulation builds before stepping."""

    config: SimConfig
    mesh: object
    dofs: object
    incidence: object
    matrices: object
    harmonic: object
    operator: EvolutionOperator
    e_tilde: np.ndarray
    u0: BlockVector
    r: float


def setup_problem(config):
    """Mesh, matrices, projected initial data, and the step operator."""
    mesh = build_shell_mesh(LatticeSpec(config.J, config.outer_radius))
    dofs = enumerate_dofs(mesh)
    inc = incidence(mesh, dofs)
    mats = assemble_system(mesh, dofs, config.gamma)
    r = r_of_gamma(config.gamma)
    harmonic = discrete_harmonic_form(mesh, dofs, mats, tol=config.cg_tol)

    e_tilde = interpolate_edge_field(
        lambda pts: eval_E_star(0.0, pts, r), mesh, dofs
    )
    if config.unprojected_initial:
        e0 = e_tilde.copy()
    else:
        e0 = project_initial_E(e_tilde, mats, inc, harmonic, tol=config.cg_tol)
    b0 = initial_B(e0, r, inc)
    p0 = np.zeros(dofs.n_vertex)

    op = build_operator(mats, inc, config.tau,
                        zero_impedance=config.zero_impedance)
    return Problem(
        config=config, mesh=mesh, dofs=dofs, incidence=inc, matrices=mats,
        harmonic=harmonic, operator=op, e_tilde=e_tilde,
        u0=BlockVector.from_blocks(e0, b0, p0), r=r,
    )


def _m_norm(matrix, v):
    return float(np.sqrt(max(v @ (matrix @ v), 0.0)))


def run_simulation(config, problem=None):
    """Full pipeline: mesh, assemble, project, then Crank-Nicolson steps.

    Records the M-norms of all three blocks, the total field energy, the
    MINRES iteration count, the weak-divergence residual, and the drift of
    the harmonic-orthogonality constraint at every step including step 0.
    """
    t0 = time.perf_counter()
    if problem is None:
        problem = setup_problem(config)
    mats = problem.matrices
    inc = problem.incidence
    h_edge = problem.harmonic.g_edge

    def record(step, u, iters):
        me_e = mats.M_e @ u.E
        e_n = float(np.sqrt(max(u.E @ me_e, 0.0)))
        b_n = _m_norm(mats.M_f, u.B)
        p_n = _m_norm(mats.M_v, u.p)
        return StepRecord(
            step=step,
            time=step * config.tau,
            e_norm=e_n,
            b_norm=b_n,
            p_norm=p_n,
            energy=e_n**2 + b_n**2,
            minres_iters=iters,
            div_residual=float(np.linalg.norm(inc.d_grad_t @ me_e)),
            harmonic_drift=abs(float(h_edge @ me_e)),
        )

    u = problem.u0.copy()
    records = [record(0, u, 0)]
    for k in range(1, config.steps + 1):
        try:
            u, info = cn_step(problem.operator, u, tol=config.minres_tol,
                              precondition=config.precondition)
        except Exception as exc:
            raise RuntimeError(f"time step {k} failed") from exc
        records.append(record(k, u, info.iterations))

    me_e0 = mats.M_e @ problem.u0.E
    return SimReport(
        records=records,
        e0_norm=float(np.sqrt(max(problem.u0.E @ me_e0, 0.0))),
        me_e0_norm=float(np.linalg.norm(me_e0)),
        config=config,
        wall_seconds=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class LemmaDiagnostics:
    """Outcome of the discrete divergence-conservation monitor."""

    max_p_ratio: float
    max_div_ratio: float
    max_harmonic_ratio: float
    p_bound: float
    div_bound: float
    harmonic_bound: float

    @property
    def p_ok(self):
        return self.max_p_ratio <= self.p_bound

    @property
    def div_ok(self):
        return self.max_div_ratio <= self.div_bound

    @property
    def harmonic_ok(self):
        return self.max_harmonic_ratio <= self.harmonic_bound

    @property
    def passed(self):
        return self.p_ok and self.div_ok and self.harmonic_ok


def lemma_monitor(report, p_bound=1e-8, div_bound=1e-7, harmonic_bound=1e-7):
    """Check that p stays zero and E stays weakly divergence free.

    Ratios are measured against the initial data: ||p_k|| against ||E_0||,
    the divergence residual and harmonic drift against ||M_e E_0||.
    """
    e_scale = report.e0_norm if report.e0_norm > 0.0 else 1.0
    me_scale = report.me_e0_norm if report.me_e0_norm > 0.0 else 1.0
    return LemmaDiagnostics(
        max_p_ratio=max(rec.p_norm for rec in report.records) / e_scale,
        max_div_ratio=max(rec.div_residual for rec in report.records) / me_scale,
        max_harmonic_ratio=(
            max(rec.harmonic_drift for rec in report.records) / me_scale
        ),
        p_bound=p_bound,
        div_bound=div_bound,
        harmonic_bound=harmonic_bound,
    )
