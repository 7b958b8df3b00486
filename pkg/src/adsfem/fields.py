"""Analytic decaying solution, discrete harmonic form, and initial data.

The closed-form fields decay like exp(r(|x| + t)) with r < 0 determined by
the dissipation parameter.  They satisfy the impedance condition
(1 + gamma) E_tan = -n ^ B on the unit sphere, are divergence free, and
obey curl E = -r B and curl B = r E outside the unit sphere.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import assemble_stiffness_all_vertices
from .mesh import GAMMA_I, GAMMA_O
from .sparsela import cg_solve


def r_of_gamma(gamma):
    """Decay rate of the dissipating mode: (1 - sqrt(1 + 4/gamma)) / 2.

    Strictly negative for every gamma > 0.
    """
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    return 0.5 * (1.0 - np.sqrt(1.0 + 4.0 / gamma))


def eval_E_star(t, x, r):
    """Electric field of the decaying mode at time t.

    ``x`` may be a single point or an (..., 3) array.  The closed form is
    smooth everywhere except the origin; physically it lives on |x| >= 1.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    rho = np.linalg.norm(pts, axis=-1)
    amp = np.exp(r * (rho + t)) / rho**2 * (r**2 - r / rho)
    out = np.zeros_like(pts)
    out[..., 1] = amp * pts[..., 2]
    out[..., 2] = -amp * pts[..., 1]
    return out[0] if single else out


def eval_B_star(t, x, r):
    """Magnetic field of the decaying mode at time t (see eval_E_star)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    rho = np.linalg.norm(pts, axis=-1)
    u = 1.0 / rho
    radial = u**3 * (r**2 - 3.0 * r * u + 3.0 * u**2)
    out = np.empty_like(pts)
    out[..., 0] = radial * (pts[..., 1] ** 2 + pts[..., 2] ** 2)
    out[..., 0] += 2.0 * r * u**2 - 2.0 * u**3
    out[..., 1] = -radial * pts[..., 0] * pts[..., 1]
    out[..., 2] = -radial * pts[..., 0] * pts[..., 2]
    out *= np.exp(r * (rho + t))[..., None]
    return out[0] if single else out


@dataclass(frozen=True)
class HarmonicForm:
    """Discrete harmonic potential: 1 on the inner sphere, 0 on the outer.

    ``values`` holds the nodal values over every mesh vertex; ``g_edge`` is
    its gradient as an edge coefficient vector (head minus tail value per
    edge dof), which spans the discrete harmonic fields the electric field
    must stay orthogonal to.
    """

    values: np.ndarray
    g_edge: np.ndarray


def discrete_harmonic_form(mesh, dofs, matrices, tol=1e-12):
    """Solve the interior Laplace problem with unit inner boundary data."""
    data = np.zeros(mesh.n_vertices)
    data[mesh.vertex_tags == GAMMA_I] = 1.0
    data[mesh.vertex_tags == GAMMA_O] = 0.0

    full = assemble_stiffness_all_vertices(mesh)
    load = -(full @ data)[dofs.vertex_entities]
    interior, _ = cg_solve(matrices.L_v, load, tol=tol)

    values = data
    values[dofs.vertex_entities] = interior

    ents = mesh.edges[dofs.edge_entities]
    g_edge = values[ents[:, 1]] - values[ents[:, 0]]
    return HarmonicForm(values=values, g_edge=g_edge)


def project_initial_E(e_tilde, matrices, incidence, harmonic, tol=1e-12):
    """Remove the gradient and harmonic components from an edge field.

    Solves L s = G^T M_e e for the gradient part, subtracts G s, then
    subtracts the M_e-orthogonal projection onto the harmonic gradient.
    The result is weakly divergence free and harmonic free.
    """
    g = incidence.d_grad
    me = matrices.M_e
    rhs = incidence.d_grad_t @ (me @ e_tilde)
    s, _ = cg_solve(matrices.L_v, rhs, tol=tol)
    e0 = e_tilde - g @ s

    h = harmonic.g_edge
    mh = me @ h
    e0 = e0 - (float(mh @ e0) / float(mh @ h)) * h

    me0 = me @ e0
    scale = np.linalg.norm(me0)
    div_res = np.linalg.norm(incidence.d_grad_t @ me0)
    harm_res = abs(float(h @ me0))
    if scale > 0.0 and (div_res > 1e-10 * scale or harm_res > 1e-10 * scale):
        raise RuntimeError(
            f"projection residuals too large: divergence {div_res:.3e}, "
            f"harmonic {harm_res:.3e}, scale {scale:.3e}"
        )
    return e0


def initial_B(e0, r, incidence):
    """Magnetic initial data paired with a divergence-free electric field.

    The decaying ansatz forces B = -(1/r) curl E; the face interpolant of
    the analytic magnetic field confirms this sign (the opposite one is
    off by O(1) instead of O(h)).
    """
    if r == 0.0:
        raise ValueError("decay rate r must be nonzero")
    return incidence.d_curl @ e0 * (-1.0 / r)
