"""Runtime invariant suite behind the ``check`` CLI command.

Each check returns a CheckResult; the suite covers the discrete complex
identity, assembly against an independent high-order quadrature, operator
structure (skewness, positive semidefiniteness), the conservation monitor,
energy dissipation, and the closed-form solution identities.
"""

from dataclasses import dataclass

import numpy as np

from . import assembly, derham, evolve, fields
from .mesh import GAMMA_I, GAMMA_O
from .sparsela import block_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# independent quadrature oracle (collapsed-cube tensor Gauss rule)

def duffy_tet_rule(npts=5):
    """Quadrature on the reference tet via the collapsed-cube map.

    Tensor Gauss-Legendre with ``npts`` points per axis; including the map
    Jacobian this integrates total degree <= 2*npts - 3 exactly (degree 7
    for the default), independent of the closed-form moments used by the
    assembly.
    Returns barycentric points (m, 4) and weights summing to 1/6.
    """
    x, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v, s = np.meshgrid(x, x, x, indexing="ij")
    wu, wv, ws = np.meshgrid(w, w, w, indexing="ij")
    u, v, s = u.ravel(), v.ravel(), s.ravel()
    weights = (wu * wv * ws).ravel() * (1.0 - u) ** 2 * (1.0 - v)
    l1 = u
    l2 = v * (1.0 - u)
    l3 = s * (1.0 - u) * (1.0 - v)
    l0 = 1.0 - l1 - l2 - l3
    return np.column_stack((l0, l1, l2, l3)), weights


def element_mass_oracle(mesh, tet, space, npts=5):
    """Local mass matrix of one tet by the collapsed-cube quadrature."""
    verts = mesh.tets[tet]
    x = mesh.vertices[verts]
    d = (x[1:] - x[0]).T
    vol = np.linalg.det(d) / 6.0
    dinv = np.linalg.inv(d)
    g = np.vstack((-dinv.sum(axis=0), dinv))
    bary, wts = duffy_tet_rule(npts)
    wts = wts * 6.0 * vol

    if space == "vertex":
        basis = bary[:, :, None]  # (q, 4, 1)
    elif space == "edge":
        pairs = [(a, b) for a in range(4) for b in range(a + 1, 4)]
        basis = np.empty((bary.shape[0], 6, 3))
        for k, (a, b) in enumerate(pairs):
            i, j = (a, b) if verts[a] < verts[b] else (b, a)
            basis[:, k, :] = bary[:, i, None] * g[j] - bary[:, j, None] * g[i]
    elif space == "face":
        triples = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        basis = np.empty((bary.shape[0], 4, 3))
        for k, tri in enumerate(triples):
            a, b, c = sorted(tri, key=lambda s: verts[s])
            basis[:, k, :] = 2.0 * (
                bary[:, a, None] * np.cross(g[b], g[c])
                + bary[:, b, None] * np.cross(g[c], g[a])
                + bary[:, c, None] * np.cross(g[a], g[b])
            )
    else:
        raise ValueError(f"unknown space {space!r}")
    return np.einsum("q,qid,qjd->ij", wts, basis, basis)


# ---------------------------------------------------------------------------
# closed-form solution identities

def fibonacci_sphere(m):
    """m quasi-uniform points on the unit sphere (deterministic)."""
    i = np.arange(m)
    z = 1.0 - (2.0 * i + 1.0) / m
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    rad = np.sqrt(1.0 - z**2)
    return np.column_stack((rad * np.cos(phi), rad * np.sin(phi), z))


def impedance_residual(gamma, points=None):
    """max |(1 + gamma) E_tan + n ^ B| over points of the unit sphere.

    The normal points into the obstacle (n = -x on |x| = 1).
    """
    if points is None:
        points = fibonacci_sphere(50)
    r = fields.r_of_gamma(gamma)
    e = fields.eval_E_star(0.0, points, r)
    b = fields.eval_B_star(0.0, points, r)
    n = -points
    e_tan = e - np.einsum("ij,ij->i", e, n)[:, None] * n
    res = (1.0 + gamma) * e_tan + np.cross(n, b)
    return float(np.abs(res).max())


def _fd_divergence(fn, pts, h=1e-4):
    div = np.zeros(pts.shape[0])
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = h
        div += (fn(pts + step)[:, ax] - fn(pts - step)[:, ax]) / (2.0 * h)
    return div


def _fd_curl(fn, pts, h=1e-4):
    jac = np.zeros((pts.shape[0], 3, 3))
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = h
        jac[:, :, ax] = (fn(pts + step) - fn(pts - step)) / (2.0 * h)
    curl = np.empty((pts.shape[0], 3))
    curl[:, 0] = jac[:, 2, 1] - jac[:, 1, 2]
    curl[:, 1] = jac[:, 0, 2] - jac[:, 2, 0]
    curl[:, 2] = jac[:, 1, 0] - jac[:, 0, 1]
    return curl


def _sample_points(m=40, seed=7):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(m, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(1.2, 3.5, size=(m, 1))


def analytic_field_residuals(gamma, h=1e-4):
    """(div E, div B, curl E + r B) finite-difference residuals, relative."""
    r = fields.r_of_gamma(gamma)
    pts = _sample_points()
    e_fn = lambda p: fields.eval_E_star(0.0, p, r)
    b_fn = lambda p: fields.eval_B_star(0.0, p, r)
    e_scale = np.abs(e_fn(pts)).max()
    b_scale = np.abs(b_fn(pts)).max()
    div_e = np.abs(_fd_divergence(e_fn, pts, h)).max() / e_scale
    div_b = np.abs(_fd_divergence(b_fn, pts, h)).max() / b_scale
    curl_res = _fd_curl(e_fn, pts, h) + r * b_fn(pts)
    curl = np.abs(curl_res).max() / max(e_scale, b_scale)
    return float(div_e), float(div_b), float(curl)


# ---------------------------------------------------------------------------
# the check suite

def check_mesh(problem):
    mesh = problem.mesh
    ok_conf = bool(np.isin(mesh.face_tet_count, (1, 2)).all())
    boundary = mesh.face_tet_count == 1
    ok_tags = bool((mesh.face_tags[boundary] != 0).all())
    radii = np.linalg.norm(mesh.vertices, axis=1)
    r_in = np.abs(radii[mesh.vertex_tags == GAMMA_I] - 1.0).max()
    r_out = np.abs(radii[mesh.vertex_tags == GAMMA_O] - problem.config.outer_radius).max()
    ok_radii = r_in <= 1e-12 and r_out <= 1e-12
    passed = ok_conf and ok_tags and ok_radii
    return CheckResult(
        "mesh-conformity", passed,
        f"faces in 1|2 tets: {ok_conf}, boundary tagged: {ok_tags}, "
        f"sphere fit {max(r_in, r_out):.2e}",
    )


def check_complex_identity(problem):
    m = problem.incidence.complex_product_max_abs()
    return CheckResult(
        "complex-identity", m == 0, f"max |D_curl D_grad| = {m} (integer)"
    )


def check_mass_oracle(problem, n_elements=20, seed=3, rtol=1e-12):
    mesh, dofs, mats = problem.mesh, problem.dofs, problem.matrices
    rng = np.random.default_rng(seed)
    tets = rng.choice(mesh.n_tets, size=n_elements, replace=False)
    worst = 0.0
    for space, mat, ents in (
        ("vertex", mats.M_v, dofs.vertex_dof[mesh.tets]),
        ("edge", mats.M_e, dofs.edge_dof[mesh.tet_edges]),
        ("face", mats.M_f, dofs.face_dof[mesh.tet_faces]),
    ):
        for tet in tets:
            ref = element_mass_oracle(mesh, int(tet), space)
            scale = np.abs(ref).max()
            got = _gather_entries(mat, ents[tet])
            local_sum = _sum_shared_contributions(
                mesh, dofs, space, int(tet)
            )
            err = np.abs(got - local_sum).max() / scale
            worst = max(worst, err)
    return CheckResult(
        "mass-oracle", worst <= rtol,
        f"max relative deviation {worst:.2e} over {n_elements} elements"
    )


def _gather_entries(mat, ents):
    k = ents.size
    out = np.zeros((k, k))
    indptr, indices, data = mat.indptr, mat.indices, mat.data
    for a, i in enumerate(ents):
        if i < 0:
            continue
        row = slice(indptr[i], indptr[i + 1])
        cols = indices[row]
        vals = data[row]
        for b, j in enumerate(ents):
            if j < 0:
                continue
            pos = np.searchsorted(cols, j)
            if pos < cols.size and cols[pos] == j:
                out[a, b] = vals[pos]
    return out


def _sum_shared_contributions(mesh, dofs, space, tet):
    """Oracle for the *global* entries touched by one element.

    Global mass entries sum contributions from every element sharing the
    entity pair, so the comparison accumulates the quadrature oracle over
    all incident elements.
    """
    if space == "vertex":
        ents = dofs.vertex_dof[mesh.tets[tet]]
        globals_ = mesh.tets[tet]
        incident = np.flatnonzero(np.isin(mesh.tets, globals_).any(axis=1))
        ent_of = lambda t: mesh.tets[t]
    elif space == "edge":
        ents = dofs.edge_dof[mesh.tet_edges[tet]]
        globals_ = mesh.tet_edges[tet]
        incident = np.flatnonzero(np.isin(mesh.tet_edges, globals_).any(axis=1))
        ent_of = lambda t: mesh.tet_edges[t]
    else:
        ents = dofs.face_dof[mesh.tet_faces[tet]]
        globals_ = mesh.tet_faces[tet]
        incident = np.flatnonzero(np.isin(mesh.tet_faces, globals_).any(axis=1))
        ent_of = lambda t: mesh.tet_faces[t]

    k = globals_.size
    out = np.zeros((k, k))
    pos = {g: a for a, g in enumerate(globals_)}
    for t in incident:
        local = element_mass_oracle(mesh, int(t), space)
        tents = ent_of(int(t))
        for a, ga in enumerate(tents):
            if ga not in pos:
                continue
            for b, gb in enumerate(tents):
                if gb not in pos:
                    continue
                out[pos[ga], pos[gb]] += local[a, b]
    mask = (ents >= 0)[:, None] & (ents >= 0)[None, :]
    return np.where(mask, out, 0.0)


def check_impedance_structure(problem, n_probes=100, seed=11):
    mats, inc = problem.matrices, problem.incidence
    zg = mats.Z_e.matmat(inc.d_grad)
    zg_max = float(np.abs(zg.data).max()) if zg.nnz else 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(mats.Z_e.shape[0])
        worst = min(worst, float(x @ (mats.Z_e @ x)))
    sym = mats.Z_e.max_abs_asymmetry()
    passed = zg_max <= 1e-14 and worst >= -1e-14 and sym == 0.0
    return CheckResult(
        "impedance-structure", passed,
        f"|Z G|_max = {zg_max:.2e}, min x'Zx = {worst:.2e}, asym = {sym:.1e}",
    )


def check_skewness(problem, n_probes=20, seed=13, bound=1e-12):
    a = build_skew_operator_cached(problem)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(a.shape[0])
        ax = a @ x
        denom = np.linalg.norm(x) * np.linalg.norm(ax)
        if denom > 0.0:
            worst = max(worst, abs(float(x @ ax)) / denom)
    return CheckResult(
        "skew-structure", worst <= bound, f"max |x'Ax| / (|x||Ax|) = {worst:.2e}"
    )


_SKEW_CACHE = {}


def build_skew_operator_cached(problem):
    key = id(problem)
    if key not in _SKEW_CACHE:
        _SKEW_CACHE.clear()
        _SKEW_CACHE[key] = evolve.build_skew_operator(
            problem.matrices, problem.incidence
        )
    return _SKEW_CACHE[key]


def check_cn_algebra(problem):
    """lhs + rhs must equal 2/tau J M exactly (the +-(A+Z)/2 parts cancel)."""
    op = problem.operator
    mats = problem.matrices
    tau = problem.config.tau
    sizes = [op.n_edge, op.n_face, op.n_vertex]
    jm = block_matrix(
        {
            (0, 0): mats.M_e.scaled(2.0 / tau),
            (1, 1): mats.M_f.scaled(-2.0 / tau),
            (2, 2): mats.M_v.scaled(-2.0 / tau),
        },
        sizes, sizes,
    )
    diff = (op.lhs + op.rhs) - jm
    err = float(np.abs(diff.data).max()) if diff.nnz else 0.0
    sym = op.lhs.max_abs_asymmetry()
    passed = err == 0.0 and sym == 0.0
    return CheckResult(
        "cn-algebra", passed,
        f"|lhs + rhs - 2JM/tau|_max = {err:.1e}, lhs asymmetry = {sym:.1e}",
    )


def check_harmonic_orthogonality(problem, n_probes=20, seed=17, bound=1e-10):
    mats, inc = problem.matrices, problem.incidence
    h = problem.harmonic.g_edge
    mh = mats.M_e @ h
    h_scale = float(np.sqrt(h @ mh))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        q = rng.standard_normal(inc.d_grad.shape[1])
        gq = inc.d_grad @ q
        denom = h_scale * float(np.sqrt(gq @ (mats.M_e @ gq)))
        if denom > 0.0:
            worst = max(worst, abs(float(mh @ gq)) / denom)
    bvals = problem.harmonic.values
    exact_bc = (
        np.abs(bvals[problem.mesh.vertex_tags == GAMMA_I] - 1.0).max() == 0.0
        and np.abs(bvals[problem.mesh.vertex_tags == GAMMA_O]).max() == 0.0
    )
    return CheckResult(
        "harmonic-orthogonality", worst <= bound and exact_bc,
        f"max |(grad h, grad q)|/scales = {worst:.2e}, boundary exact: {exact_bc}",
    )


def check_analytic_solution(problem):
    res_low = impedance_residual(problem.config.gamma)
    res_half = impedance_residual(0.5)
    div_e, div_b, curl = analytic_field_residuals(problem.config.gamma)
    passed = (
        max(res_low, res_half) <= 1e-12
        and div_e <= 1e-6 and div_b <= 1e-6 and curl <= 1e-6
    )
    return CheckResult(
        "analytic-solution", passed,
        f"impedance {max(res_low, res_half):.2e}, div E {div_e:.2e}, "
        f"div B {div_b:.2e}, curl E + rB {curl:.2e}",
    )


def check_lemma_invariants(problem, report, expect_violation=False):
    diag = evolve.lemma_monitor(report)
    if expect_violation:
        violated = diag.max_p_ratio > 1e-3
        return CheckResult(
            "lemma-negative-control", violated,
            f"expected violation {'seen' if violated else 'MISSING'}: "
            f"max |p|/|E_0| = {diag.max_p_ratio:.2e}",
        )
    return CheckResult(
        "lemma-invariants", diag.passed,
        f"max |p|/|E_0| = {diag.max_p_ratio:.2e}, "
        f"div drift {diag.max_div_ratio:.2e}, "
        f"harmonic drift {diag.max_harmonic_ratio:.2e}",
    )


def check_energy_behavior(problem, report, slack=1e-8):
    norms = [
        np.sqrt(r.e_norm**2 + r.b_norm**2 + r.p_norm**2) for r in report.records
    ]
    u0 = norms[0] if norms[0] > 0.0 else 1.0
    if problem.config.zero_impedance:
        drift = max(abs(n - norms[0]) for n in norms) / u0
        return CheckResult(
            "energy-conservation", drift <= slack,
            f"max |u_k - u_0| / |u_0| = {drift:.2e} without impedance",
        )
    growth = max(
        (norms[k + 1] - norms[k]) / u0 for k in range(len(norms) - 1)
    ) if len(norms) > 1 else 0.0
    return CheckResult(
        "energy-dissipation", growth <= slack,
        f"max per-step M-norm growth = {growth:.2e} (relative)",
    )


def check_projection(problem, seed=23):
    mats, inc, harmonic = problem.matrices, problem.incidence, problem.harmonic
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(inc.d_grad.shape[1])
    grad_in = inc.d_grad @ q
    out = fields.project_initial_E(grad_in, mats, inc, harmonic)
    scale = np.linalg.norm(grad_in)
    r1 = np.linalg.norm(out) / scale
    out = fields.project_initial_E(harmonic.g_edge.copy(), mats, inc, harmonic)
    r2 = np.linalg.norm(out) / np.linalg.norm(harmonic.g_edge)
    e0 = problem.u0.E
    again = fields.project_initial_E(e0.copy(), mats, inc, harmonic)
    r3 = np.linalg.norm(again - e0) / np.linalg.norm(e0)
    passed = r1 <= 1e-10 and r2 <= 1e-10 and r3 <= 1e-12
    return CheckResult(
        "projection", passed,
        f"gradient in: {r1:.2e}, harmonic in: {r2:.2e}, idempotency: {r3:.2e}",
    )


def run_check_suite(config):
    """Run every check; returns (results, all_passed)."""
    problem = evolve.setup_problem(config)
    report = evolve.run_simulation(config, problem=problem)
    results = [
        check_mesh(problem),
        check_complex_identity(problem),
        check_mass_oracle(problem),
        check_impedance_structure(problem),
        check_skewness(problem),
        check_cn_algebra(problem),
        check_harmonic_orthogonality(problem),
        check_analytic_solution(problem),
        check_lemma_invariants(
            problem, report, expect_violation=config.unprojected_initial
        ),
        check_energy_behavior(problem, report),
    ]
    if not config.unprojected_initial:
        results.append(check_projection(problem))
    return results, all(r.passed for r in results)
