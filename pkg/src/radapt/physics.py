"""Poisson and linear elasticity: assembly, forward solve and shape derivatives.

Poisson uses weak penalty Dirichlet conditions,

    a(u, v) = int grad u . grad v + gamma int_{G_D} u v
    l(v)    = int b v + gamma int_{G_D} u_b v + int_{G_N} t v,

elasticity eliminates the (homogeneous) Dirichlet DOFs strongly.

Analytic data are callables ``f(x, y)`` built from :mod:`radapt.dual`
functions, so they can be differentiated with respect to node positions.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dual as ad
from .fespace import (FaceGeometry, FieldVector, Geometry, Space, phys_grad, scatter_matrix,
                      scatter_vector, tabulate)
from .linalg import SparseMatrix, pcg_solve
from .mesh import InvalidMeshError, min_det_jacobian
from .quadrature import quad_rule


@dataclass
class ProblemDef:
    """Boundary value problem data.

    Scalar callbacks return one value per point; vector callbacks (elasticity)
    return a pair ``(f_x, f_y)``.  ``None`` means identically zero.
    """

    kind: str = "poisson"
    source: object = None
    dirichlet: object = None
    dirichlet_attrs: frozenset = frozenset()
    neumann: object = None
    neumann_attrs: frozenset = frozenset()
    penalty: float = 1e5
    young: float = 1.0
    poisson_ratio: float = 0.3
    plane: str = "stress"
    exact: object = None
    exact_grad: object = None
    rtol: float = 1e-10
    solver: str = "pcg"
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("poisson", "elasticity"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if self.plane not in ("stress", "strain"):
            raise ValueError("plane must be 'stress' or 'strain'")
        if self.solver not in ("pcg", "direct"):
            raise ValueError("solver must be 'pcg' or 'direct'")
        self.dirichlet_attrs = frozenset(self.dirichlet_attrs)
        self.neumann_attrs = frozenset(self.neumann_attrs)

    @property
    def vdim(self):
        return 1 if self.kind == "poisson" else 2

    def lame(self):
        E, nu = self.young, self.poisson_ratio
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        if self.plane == "stress":
            lam = 2.0 * lam * mu / (lam + 2.0 * mu)
        return lam, mu


def _eval_cb(cb, X, vdim):
    """Evaluate a callback at points ``X[..., 2]``; returns list of vdim components or None."""
    if cb is None:
        return None
    out = cb(X[..., 0], X[..., 1])
    if vdim == 1:
        return [out]
    return list(out)


def _faces_with(mesh, attrs):
    faces = mesh.boundary_faces
    if not attrs:
        return faces[:0]
    return faces[np.isin(faces[:, 2], list(attrs))]


def dirichlet_dofs(problem, space):
    """Global DOFs eliminated by strong Dirichlet conditions (elasticity only)."""
    if problem.kind != "elasticity":
        return np.zeros(0, dtype=np.int64)
    faces = _faces_with(space.mesh, problem.dirichlet_attrs)
    scalar = set()
    for e, f, _ in faces:
        scalar.update(space.dofs[e, space.face_dofs(f)].tolist())
    scalar = np.array(sorted(scalar), dtype=np.int64)
    return np.concatenate([c * space.n_scalar + scalar for c in range(space.vdim)])


class System:
    """Assembled linear system ``K u = F`` plus bookkeeping."""

    def __init__(self, K, F, fixed):
        self.K = K
        self.F = F
        self.fixed = fixed


def _elastic_Ke(G, w, lam, mu):
    """Element stiffness ``(E, 2n, 2n)`` from physical gradients ``G (E, q, n, 2)``."""
    E_, q, n, _ = G.shape
    K = np.zeros((E_, 2 * n, 2 * n))
    GG = np.einsum("eq,eqia,eqjb->eiajb", w, G, G)   # int G_ia G_jb
    lap = GG[:, :, 0, :, 0] + GG[:, :, 1, :, 1]
    for c in range(2):
        for d in range(2):
            blk = lam * GG[:, :, c, :, d] + mu * GG[:, :, d, :, c]
            if c == d:
                blk = blk + mu * lap
            K[:, c * n:(c + 1) * n, d * n:(d + 1) * n] = blk
    return K


def assemble(problem, space, mesh=None):
    """Assemble stiffness ``K`` (CSR) and load ``F`` on the space's mesh."""
    if mesh is not None and mesh is not space.mesh:
        space = space.with_mesh(mesh)
    mesh = space.mesh
    if problem.kind == "elasticity" and not problem.dirichlet_attrs:
        raise ValueError("elasticity needs a non-empty Dirichlet boundary")
    vdim = problem.vdim
    if space.vdim != vdim:
        space = space.with_mesh(mesh, vdim)
    ex = space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    xe = mesh.element_coords()
    geo = Geometry(xe, tab_m)
    w = rule.weights * geo.detA
    G = np.einsum("eqba,qjb->eqja", geo.Ainv, tab_u.dphi)
    n = space.n_local
    if problem.kind == "poisson":
        Ke = np.einsum("eq,eqia,eqja->eij", w, G, G)
    else:
        lam, mu = problem.lame()
        Ke = _elastic_Ke(G, w, lam, mu)
    vdofs = space.vector_dofs()
    K = scatter_matrix(vdofs, Ke, space.ndofs, symmetric=True)
    # volume load
    Fe = np.zeros((mesh.n_elements, vdim * n))
    b = _eval_cb(problem.source, geo.X, vdim)
    if b is not None:
        for c in range(vdim):
            Fe[:, c * n:(c + 1) * n] += np.einsum("eq,eq,qi->ei", w, np.broadcast_to(b[c], w.shape),
                                                  tab_u.phi)
    F = scatter_vector(vdofs, Fe, space.ndofs)
    # boundary terms
    fex = 2 * max(mesh.order, space.order) + 3
    if problem.kind == "poisson" and problem.dirichlet_attrs:
        fg = FaceGeometry(mesh, _faces_with(mesh, problem.dirichlet_attrs), xe, fex)
        if len(fg.faces):
            phi_f = fg.space_tab(space, fex)
            wf = fg.rule.weights * fg.jac
            Kf = problem.penalty * np.einsum("fq,fqi,fqj->fij", wf, phi_f, phi_f)
            fdofs = space.dofs[fg.elem]
            K = _add(K, scatter_matrix(fdofs, Kf, space.ndofs, symmetric=True))
            ub = _eval_cb(problem.dirichlet, fg.X, 1)
            if ub is not None:
                Ff = problem.penalty * np.einsum("fq,fq,fqi->fi", wf,
                                                 np.broadcast_to(ub[0], wf.shape), phi_f)
                F += scatter_vector(fdofs, Ff, space.ndofs)
    if problem.neumann_attrs and problem.neumann is not None:
        fg = FaceGeometry(mesh, _faces_with(mesh, problem.neumann_attrs), xe, fex)
        if len(fg.faces):
            phi_f = fg.space_tab(space, fex)
            wf = fg.rule.weights * fg.jac
            t = _eval_cb(problem.neumann, fg.X, vdim)
            for c in range(vdim):
                Ff = np.einsum("fq,fq,fqi->fi", wf, np.broadcast_to(t[c], wf.shape), phi_f)
                F += scatter_vector(c * space.n_scalar + space.dofs[fg.elem], Ff, space.ndofs)
    fixed = dirichlet_dofs(problem, space)
    if len(fixed):
        K, F = _eliminate(K, F, fixed)
    return System(K, F, fixed)


def _add(A, B):
    return SparseMatrix.from_scipy(A.csr + B.csr, symmetric=A.symmetric and B.symmetric)


def _eliminate(K, F, fixed):
    n = K.shape[0]
    keep = np.ones(n)
    keep[fixed] = 0.0
    D = sp.diags(keep)
    csr = D @ K.csr @ D + sp.diags(1.0 - keep)
    F = F * keep
    return SparseMatrix.from_scipy(csr, symmetric=True), F


def solve_forward(problem, space, mesh=None, system=None, history=None):
    """Solve the forward problem; returns ``(u, system)``."""
    if mesh is not None and mesh is not space.mesh:
        space = space.with_mesh(mesh)
    if space.vdim != problem.vdim:
        space = space.with_mesh(space.mesh, problem.vdim)
    if min_det_jacobian(space.mesh) <= 0.0:
        raise InvalidMeshError("cannot solve on an invalid mesh")
    if system is None:
        system = assemble(problem, space)
    u = solve_linear(problem, system.K, system.F, history)
    return FieldVector(space, u), system


def solve_linear(problem, K, b, history=None):
    """Solve with the problem's solver: Jacobi PCG, or sparse LU for tight checks."""
    if problem.solver == "direct":
        x = spla.spsolve(K.csr.tocsc(), b)
        if history is not None:
            history.append((0, float(np.linalg.norm(K @ x - b) / max(np.linalg.norm(b), 1e-300))))
        return x
    return pcg_solve(K, b, rtol=problem.rtol, history=history)


# ---- residual contraction and its shape derivative ----------------------
def element_coords_dual(mesh):
    """Element coordinates seeded one local coordinate at a time.

    The tangent has leading axes ``(Np, 2)``: seed ``(i, a)`` perturbs
    coordinate ``a`` of local node ``i`` in every element simultaneously.
    """
    xe = mesh.element_coords()
    E, Np, _ = xe.shape
    t = np.zeros((Np, 2, E, Np, 2))
    for i in range(Np):
        for a in range(2):
            t[i, a, :, i, a] = 1.0
    return ad.Dual(xe, t)


def faces_to_elements(v, elem, n_elem):
    """Sum per-face values (array or dual, face axis last) into per-element values."""
    p = np.zeros(n_elem)
    np.add.at(p, elem, ad.primal(v))
    if not isinstance(v, ad.Dual):
        return p
    t = np.asarray(v.tangent)
    lead = t.shape[:-1]
    out = np.zeros(lead + (n_elem,))
    t2 = t.reshape(-1, t.shape[-1])
    o2 = out.reshape(-1, n_elem)
    np.add.at(o2, (slice(None), elem), t2)
    return ad.Dual(p, out)


def gather_seed_gradient(mesh, val):
    """Scatter the tangent ``(Np, 2, E)`` of a seeded evaluation into a flat coordinate gradient."""
    t = np.asarray(val.tangent)
    Np = mesh.basis.n
    E = mesh.n_elements
    t = np.broadcast_to(t, (Np, 2, E))
    g = np.zeros(2 * mesh.n_nodes)
    n = mesh.n_nodes
    for a in range(2):
        np.add.at(g, a * n + mesh.elements.T, t[:, a, :])
    return g


def residual_contraction(problem, space, xe, u, lam):
    """Per-element ``lam^T R_P(u; x)`` for coordinates *xe* (array or dual)."""
    mesh = space.mesh
    vdim = problem.vdim
    ex = space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    geo = Geometry(xe, tab_m)
    w = geo.detA * rule.weights
    ue = u.element_values()          # (E, vdim, n)
    le = lam.element_values()
    gu = phys_grad(geo.Ainv, np.einsum("eci,qib->eqcb", ue, tab_u.dphi))
    gl = phys_grad(geo.Ainv, np.einsum("eci,qib->eqcb", le, tab_u.dphi))
    lq = np.einsum("eci,qi->eqc", le, tab_u.phi)
    if problem.kind == "poisson":
        integrand = gu[..., 0, 0] * gl[..., 0, 0] + gu[..., 0, 1] * gl[..., 0, 1]
    else:
        lmb, mu = problem.lame()
        div_u = gu[..., 0, 0] + gu[..., 1, 1]
        div_l = gl[..., 0, 0] + gl[..., 1, 1]
        integrand = lmb * div_u * div_l
        for c in range(2):
            for d in range(2):
                eps_u = 0.5 * (gu[..., c, d] + gu[..., d, c])
                integrand = integrand + 2.0 * mu * eps_u * gl[..., c, d]
    b = _eval_cb(problem.source, geo.X, vdim)
    if b is not None:
        for c in range(vdim):
            integrand = integrand - b[c] * lq[..., c]
    total = (w * integrand).sum(axis=-1)
    total = total + _boundary_contraction(problem, space, xe, ue, le, load_only=False)
    return total


def load_contraction(problem, space, xe, v):
    """Per-element ``l(v; x)`` for coordinates *xe* (array or dual)."""
    mesh = space.mesh
    vdim = problem.vdim
    ex = space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    geo = Geometry(xe, tab_m)
    w = geo.detA * rule.weights
    ve = v.element_values()
    vq = np.einsum("eci,qi->eqc", ve, tab_u.phi)
    b = _eval_cb(problem.source, geo.X, vdim)
    total = 0.0 * w.sum(axis=-1)
    if b is not None:
        integrand = 0.0
        for c in range(vdim):
            integrand = integrand + b[c] * vq[..., c]
        total = total + (w * integrand).sum(axis=-1)
    # boundary part of -R evaluated with u = 0 gives +l_boundary
    return total - _boundary_contraction(problem, space, xe, None, ve, load_only=True)


def _boundary_contraction(problem, space, xe, ue, le, load_only):
    """Boundary part of ``lam^T R`` (``load_only``: only the load terms, i.e. ``-l_bdr``)."""
    mesh = space.mesh
    E = mesh.n_elements
    fex = 2 * max(mesh.order, space.order) + 3
    vdim = problem.vdim
    total = 0.0
    if problem.kind == "poisson" and problem.dirichlet_attrs:
        faces = _faces_with(mesh, problem.dirichlet_attrs)
        if len(faces):
            fg = FaceGeometry(mesh, faces, xe, fex)
            phi_f = fg.space_tab(space, fex)
            wf = fg.jac * fg.rule.weights
            lf = np.einsum("fi,fqi->fq", le[fg.elem, 0], phi_f)
            integrand = 0.0
            if not load_only:
                uf = np.einsum("fi,fqi->fq", ue[fg.elem, 0], phi_f)
                integrand = uf
            ub = _eval_cb(problem.dirichlet, fg.X, 1)
            if ub is not None:
                integrand = integrand - ub[0]
            val = (problem.penalty * wf * integrand * lf).sum(axis=-1)
            total = total + faces_to_elements(val, fg.elem, E)
    if problem.neumann_attrs and problem.neumann is not None:
        faces = _faces_with(mesh, problem.neumann_attrs)
        if len(faces):
            fg = FaceGeometry(mesh, faces, xe, fex)
            phi_f = fg.space_tab(space, fex)
            wf = fg.jac * fg.rule.weights
            t = _eval_cb(problem.neumann, fg.X, vdim)
            integrand = 0.0
            for c in range(vdim):
                lf = np.einsum("fi,fqi->fq", le[fg.elem, c], phi_f)
                integrand = integrand - t[c] * lf
            val = (wf * integrand).sum(axis=-1)
            total = total + faces_to_elements(val, fg.elem, E)
    return total


def residual_shape_vjp(problem, u, lam, mesh=None):
    """``lam^T dR_P/dx`` as a flat coordinate vector (length ``2 N``)."""
    space = u.space if mesh is None else u.space.with_mesh(mesh)
    val = residual_contraction(problem, space, element_coords_dual(space.mesh), u, lam)
    return gather_seed_gradient(space.mesh, val)


def residual_value(problem, u, lam, x=None):
    """Scalar ``lam^T R_P(u; x)`` (float path, used for finite-difference checks)."""
    space = u.space
    xe = space.mesh.element_coords(x)
    return float(np.sum(residual_contraction(problem, space, xe, u, lam)))


def load_value(problem, v, x=None):
    space = v.space
    return float(np.sum(load_contraction(problem, space, space.mesh.element_coords(x), v)))


def elastic_energy(problem, u):
    """Strain energy ``0.5 a(u, u)`` (volume part)."""
    zero = ProblemDef(kind=problem.kind, young=problem.young,
                      poisson_ratio=problem.poisson_ratio, plane=problem.plane)
    return 0.5 * float(np.sum(residual_contraction(zero, u.space, u.space.mesh.element_coords(),
                                                   u, u)))


def make_space(problem, mesh, order):
    return Space(mesh, order, problem.vdim)

