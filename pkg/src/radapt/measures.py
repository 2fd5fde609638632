"""Solution-based error measures ``F_P`` and their partial derivatives.

Three measures are available:

``local_variation``
    ``sum_e int_e (u - mean_e(u))^2``, the deviation of the solution from
    its element average.
``load_functional``
    ``-l(u_h)``; maximizing the load functional minimizes the energy norm of
    the discretization error for self-adjoint problems.
``grad_continuity``
    ``int |grad u - g|^2`` where ``g`` is the continuous L2 projection of
    ``grad u`` (Zienkiewicz-Zhu style recovery).  Poisson only.

Every measure is written as a per-element contraction that accepts plain or
dual element coordinates, so the explicit shape partial ``dF/dx`` is one
seeded evaluation.
"""

import numpy as np
import scipy.sparse as sp

from .fespace import FieldVector, Geometry, Space, phys_grad, scatter_matrix, scatter_vector, tabulate
from .linalg import pcg_solve
from .physics import element_coords_dual, gather_seed_gradient, load_contraction
from .quadrature import quad_rule

MEASURES = ("local_variation", "load_functional", "grad_continuity")
PROJECTION_RTOL = 1e-12


def check_kind(kind, problem=None):
    if kind not in MEASURES:
        raise ValueError(f"unknown measure {kind!r}; expected one of {MEASURES}")
    if kind == "grad_continuity" and problem is not None and problem.kind != "poisson":
        raise ValueError("grad_continuity is only defined for scalar (Poisson) problems")


def _setup(space, xe):
    mesh = space.mesh
    ex = space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    geo = Geometry(xe, tab_m)
    return geo, geo.detA * rule.weights, tab_u


def _on(u, mesh):
    if mesh is None or mesh is u.space.mesh:
        return u
    return FieldVector(u.space.with_mesh(mesh), u.coeffs)


# ---- local variation ------------------------------------------------------
def local_variation_elements(u, xe):
    """Per-element ``int (u - mean)^2 = int u^2 - (int u)^2 / |e|``, summed over components."""
    _, w, tab = _setup(u.space, xe)
    uq = np.einsum("eci,qi->ecq", u.element_values(), tab.phi)
    vol = w.sum(axis=-1)
    total = 0.0
    for c in range(u.space.vdim):
        s1 = (w * uq[:, c]).sum(axis=-1)
        s2 = (w * uq[:, c] ** 2).sum(axis=-1)
        total = total + s2 - s1 * s1 / vol
    return total


def fp_local_variation(u, mesh=None):
    u = _on(u, mesh)
    return float(np.sum(local_variation_elements(u, u.space.mesh.element_coords())))


def _local_variation_dfdu(u):
    space = u.space
    _, w, tab = _setup(space, space.mesh.element_coords())
    ue = u.element_values()
    uq = np.einsum("eci,qi->ecq", ue, tab.phi)
    mean = np.einsum("eq,ecq->ec", w, uq) / w.sum(axis=-1)[:, None]
    # d/du_i int (u - mean)^2 = 2 int (u - mean) phi_i, since int (u - mean) = 0
    Fe = 2.0 * np.einsum("eq,ecq,qi->eci", w, uq - mean[:, :, None], tab.phi)
    return scatter_vector(space.vector_dofs(), Fe.reshape(len(ue), -1), space.ndofs)


# ---- load functional ------------------------------------------------------
def fp_load_functional(u, problem, mesh=None):
    """``-l(u_h)`` including volume, Neumann and penalty Dirichlet load terms."""
    u = _on(u, mesh)
    return -float(np.sum(load_contraction(problem, u.space, u.space.mesh.element_coords(), u)))


def _load_dfdu(u, problem):
    # F is linear in u, so dF/du_i = -l(phi_i)
    space = u.space
    xe = space.mesh.element_coords()
    n = space.n_local
    vd = space.vdim
    E = space.mesh.n_elements
    Fe = np.zeros((E, vd * n))
    for c in range(vd):
        for i in range(n):
            Fe[:, c * n + i] = _load_elementwise_basis(problem, space, xe, c, i)
    return -scatter_vector(space.vector_dofs(), Fe, space.ndofs)


def _load_elementwise_basis(problem, space, xe, c, i):
    """Element contributions ``l_e(phi_i e_c)`` for every element e.

    Uses a discontinuous copy of the space so each element carries its own
    unit coefficient.
    """
    E = space.mesh.n_elements
    n = space.n_local
    broken = Space(space.mesh, space.order, space.vdim,
                   _dofs=(np.arange(E * n).reshape(E, n), E * n))
    coeffs = np.zeros(space.vdim * E * n)
    coeffs[c * E * n + np.arange(E) * n + i] = 1.0
    return np.asarray(load_contraction(problem, broken, xe, FieldVector(broken, coeffs)))


# ---- gradient recovery ----------------------------------------------------
def gradient_space(space):
    """Vector space (``vdim = 2``) of the same order as the solution space."""
    return Space(space.mesh, space.order, 2, _dofs=(space.dofs, space.n_scalar))


def projection_operators(space):
    """Vector mass matrix ``M`` and gradient matrix ``B`` with ``(B u)_{c,j} = int d_c u psi_j``."""
    mesh = space.mesh
    geo, w, tab = _setup(space, mesh.element_coords())
    gs = gradient_space(space)
    n = space.n_local
    Me = np.einsum("eq,qi,qj->eij", w, tab.phi, tab.phi)
    Mv = np.zeros((len(Me), 2 * n, 2 * n))
    for c in range(2):
        Mv[:, c * n:(c + 1) * n, c * n:(c + 1) * n] = Me
    M = scatter_matrix(gs.vector_dofs(), Mv, gs.ndofs, symmetric=True)
    G = np.einsum("eqba,qjb->eqja", geo.Ainv, tab.dphi)          # (E, q, n, 2)
    Be = np.einsum("eq,qj,eqic->ecji", w, tab.phi, G).reshape(len(Me), 2 * n, n)
    rows = np.broadcast_to(gs.vector_dofs()[:, :, None], Be.shape).ravel()
    cols = np.broadcast_to(space.dofs[:, None, :], Be.shape).ravel()
    B = sp.coo_matrix((Be.ravel(), (rows, cols)), shape=(gs.ndofs, space.ndofs)).tocsr()
    return M, B


def project_gradient(u, mesh=None, history=None):
    """Continuous L2 projection ``g`` of ``grad u``: ``M g = B u``."""
    u = _on(u, mesh)
    if u.space.vdim != 1:
        raise ValueError("gradient projection is defined for scalar fields")
    M, B = projection_operators(u.space)
    g = pcg_solve(M, B @ u.coeffs, rtol=PROJECTION_RTOL, history=history)
    return FieldVector(gradient_space(u.space), g)


def grad_continuity_elements(u, g, xe):
    """Per-element ``int |grad u - g|^2``."""
    geo, w, tab = _setup(u.space, xe)
    gu = phys_grad(geo.Ainv, np.einsum("eci,qib->eqcb", u.element_values(), tab.dphi))
    gq = np.einsum("eci,qi->eqc", g.element_values(), tab.phi)
    d0 = gu[..., 0, 0] - gq[..., 0]
    d1 = gu[..., 0, 1] - gq[..., 1]
    return (w * (d0 * d0 + d1 * d1)).sum(axis=-1)


def projection_residual_elements(u, g, mu, xe):
    """Per-element ``mu^T R_pi = int mu . g - mu . grad u``."""
    geo, w, tab = _setup(u.space, xe)
    gu = phys_grad(geo.Ainv, np.einsum("eci,qib->eqcb", u.element_values(), tab.dphi))
    gq = np.einsum("eci,qi->eqc", g.element_values(), tab.phi)
    mq = np.einsum("eci,qi->eqc", mu.element_values(), tab.phi)
    integrand = mq[..., 0] * (gq[..., 0] - gu[..., 0, 0]) + mq[..., 1] * (gq[..., 1] - gu[..., 0, 1])
    return (w * integrand).sum(axis=-1)


def fp_grad_continuity(u, g, mesh=None):
    u = _on(u, mesh)
    return float(np.sum(grad_continuity_elements(u, g, u.space.mesh.element_coords())))


def _grad_continuity_dfdu_dfdg(u, g):
    space = u.space
    geo, w, tab = _setup(space, space.mesh.element_coords())
    G = np.einsum("eqba,qjb->eqja", geo.Ainv, tab.dphi)
    gu = np.einsum("ei,eqia->eqa", u.element_values()[:, 0], G)
    gq = np.einsum("eci,qi->eqc", g.element_values(), tab.phi)
    r = gu - gq
    Fu = 2.0 * np.einsum("eq,eqa,eqia->ei", w, r, G)
    Fg = -2.0 * np.einsum("eq,eqc,qi->eci", w, r, tab.phi).reshape(len(Fu), -1)
    dfdu = scatter_vector(space.dofs, Fu, space.ndofs)
    dfdg = scatter_vector(gradient_space(space).vector_dofs(), Fg, 2 * space.n_scalar)
    return dfdu, dfdg


# ---- dispatch -------------------------------------------------------------
def measure_value(kind, u, g=None, problem=None, mesh=None):
    check_kind(kind, problem)
    if kind == "local_variation":
        return fp_local_variation(u, mesh)
    if kind == "load_functional":
        return fp_load_functional(u, problem, mesh)
    if g is None:
        g = project_gradient(u, mesh)
    return fp_grad_continuity(u, g, mesh)


def measure_elements(kind, u, g, problem, xe):
    """Per-element measure for (possibly dual) coordinates *xe*."""
    if kind == "local_variation":
        return local_variation_elements(u, xe)
    if kind == "load_functional":
        return -load_contraction(problem, u.space, xe, u)
    return grad_continuity_elements(u, g, xe)


def measure_partials(kind, u, g=None, problem=None, mesh=None):
    """Partials ``(dF/du, dF/dg, dF/dx)`` with the other arguments frozen.

    ``dF/dg`` is ``None`` except for ``grad_continuity``; ``dF/dx`` is the
    flat coordinate gradient (length ``2 N``).
    """
    check_kind(kind, problem)
    u = _on(u, mesh)
    space = u.space
    dfdg = None
    if kind == "local_variation":
        dfdu = _local_variation_dfdu(u)
    elif kind == "load_functional":
        dfdu = _load_dfdu(u, problem)
    else:
        if g is None:
            g = project_gradient(u)
        g = FieldVector(gradient_space(space), g.coeffs)
        dfdu, dfdg = _grad_continuity_dfdu_dfdg(u, g)
    val = measure_elements(kind, u, g, problem, element_coords_dual(space.mesh))
    return dfdu, dfdg, gather_seed_gradient(space.mesh, val)


def projection_shape_vjp(u, g, mu):
    """``mu^T dR_pi/dx`` for the gradient-projection residual ``R_pi = M g - B u``."""
    space = u.space
    gs = gradient_space(space)
    val = projection_residual_elements(u, FieldVector(gs, g.coeffs), FieldVector(gs, mu),
                                       element_coords_dual(space.mesh))
    return gather_seed_gradient(space.mesh, val)
