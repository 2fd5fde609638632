"""Continuous Lagrange spaces on a :class:`~radapt.mesh.Mesh`.

Most routines here are vectorized over elements and quadrature points and
accept element coordinates as plain arrays or as :class:`~radapt.dual.Dual`
arrays, so the same code serves assembly and shape differentiation.
"""

from functools import lru_cache

import numpy as np

from . import dual as ad
from .linalg import SingularMatrixError, SparseMatrix, SmallMatrix
from .mesh import det2, element_jacobian, element_points, number_lattice, ref_basis
from .quadrature import quad_rule, segment_rule


class Tab:
    """Basis values/gradients tabulated at a fixed set of reference points."""

    __slots__ = ("phi", "dphi")

    def __init__(self, phi, dphi):
        self.phi = phi
        self.dphi = dphi


@lru_cache(maxsize=None)
def tabulate(elem_type, order, exactness):
    """Tabulation of the order-``p`` basis at the volume rule of given exactness."""
    rule = quad_rule(elem_type, exactness)
    return Tab(*ref_basis(elem_type, order).eval(rule.points))


@lru_cache(maxsize=None)
def tabulate_edges(elem_type, order, exactness):
    """Per-local-edge tabulations: ``phi (n_edges, nq, Np)``, ``dphi (n_edges, nq, Np, 2)``."""
    basis = ref_basis(elem_type, order)
    t = segment_rule(exactness).points[:, 0]
    phis, dphis = [], []
    for f in range(basis.n_edges):
        v, g = basis.eval(basis.edge_points(f, t))
        phis.append(v)
        dphis.append(g)
    return Tab(np.array(phis), np.array(dphis))


def default_exactness(mesh_order, space_order):
    return 2 * max(mesh_order, space_order) + 3


class Space:
    """Continuous Lagrange space of order ``p_u`` with ``vdim`` components.

    Global vector DOFs are component-major: component ``c`` of scalar DOF
    ``j`` has index ``c * n_scalar + j``.
    """

    def __init__(self, mesh, order, vdim=1, _dofs=None):
        if not 1 <= order <= 4:
            raise ValueError("space order must be in 1..4")
        self.mesh = mesh
        self.order = int(order)
        self.vdim = int(vdim)
        self.basis = ref_basis(mesh.elem_type, order)
        if _dofs is not None:
            self.dofs, self.n_scalar = _dofs
        elif order == mesh.order:
            self.dofs, self.n_scalar = mesh.elements, mesh.n_nodes
        else:
            self.dofs, self.n_scalar = number_lattice(mesh.vertex_elements, self.basis)

    def __repr__(self):
        return f"Space(order={self.order}, vdim={self.vdim}, ndofs={self.ndofs})"

    @property
    def ndofs(self):
        return self.vdim * self.n_scalar

    @property
    def n_local(self):
        return self.basis.n

    def with_mesh(self, mesh, vdim=None):
        """Same DOF numbering on a mesh with the same topology."""
        return Space(mesh, self.order, self.vdim if vdim is None else vdim,
                     _dofs=(self.dofs, self.n_scalar))

    def vector_dofs(self):
        """``(E, vdim * n_local)`` global DOF ids, component-major within each element."""
        return np.concatenate([c * self.n_scalar + self.dofs for c in range(self.vdim)], axis=1)

    def quad_exactness(self):
        return default_exactness(self.mesh.order, self.order)

    def dof_points(self):
        """Physical coordinates ``(n_scalar, 2)`` of the scalar DOFs."""
        mesh = self.mesh
        phi, _ = mesh.basis.eval(self.basis.nodes)
        X = element_points(mesh.element_coords(), phi)
        pts = np.zeros((self.n_scalar, 2))
        pts[self.dofs] = X
        return pts

    def face_dofs(self, local_edge):
        return self.basis.edge_nodes[local_edge]


class FieldVector:
    """Coefficients of a finite element field."""

    def __init__(self, space, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.ndofs)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndofs,):
            raise ValueError(f"expected {space.ndofs} coefficients, got {coeffs.shape}")
        self.coeffs = coeffs

    def __repr__(self):
        return f"FieldVector({self.space!r})"

    def element_values(self):
        """Local coefficients ``(E, vdim, n_local)``."""
        sp = self.space
        c = self.coeffs.reshape(sp.vdim, sp.n_scalar)
        return np.transpose(c[:, sp.dofs], (1, 0, 2))

    def component(self, c):
        sp = self.space
        return self.coeffs[c * sp.n_scalar:(c + 1) * sp.n_scalar]


def build_space(mesh, p_u, vdim=1):
    return Space(mesh, p_u, vdim)


def interpolate(space, f):
    """Nodal interpolant of ``f(X) -> (vdim, n)`` or ``(n,)`` for scalar spaces."""
    X = space.dof_points()
    vals = np.asarray(f(X), dtype=float)
    if space.vdim == 1:
        vals = vals.reshape(1, -1)
    return FieldVector(space, vals.reshape(space.vdim, -1).ravel())


# ---- geometry helpers (dual-capable) -----------------------------------
def inv2(A, detA):
    """Inverse of ``[..., 2, 2]`` matrices given their determinants."""
    a, b = A[..., 0, 0], A[..., 0, 1]
    c, d = A[..., 1, 0], A[..., 1, 1]
    r0 = ad.stack([d / detA, -b / detA], axis=-1)
    r1 = ad.stack([-c / detA, a / detA], axis=-1)
    return ad.stack([r0, r1], axis=-2)


def phys_grad(Ainv, gref):
    """Physical gradient ``A^{-T} gref`` over the last axis of *gref*.

    *gref* has shape ``(E, nq, ..., 2)`` (extra axes for vector components);
    *Ainv* has shape ``(E, nq, 2, 2)``.
    """
    extra = np.ndim(ad.primal(gref)) - 3
    comps = []
    for a in range(2):
        i0 = Ainv[..., 0, a]
        i1 = Ainv[..., 1, a]
        for _ in range(extra):
            i0 = _expand(i0)
            i1 = _expand(i1)
        comps.append(i0 * gref[..., 0] + i1 * gref[..., 1])
    return ad.stack(comps, axis=-1)


def _expand(v):
    if isinstance(v, ad.Dual):
        t = v.tangent[..., None] if np.ndim(v.tangent) else v.tangent
        return ad.Dual(v.primal[..., None], t)
    return v[..., None]


class Geometry:
    """Jacobians, determinants, inverses and points at quadrature points.

    Parameters
    ----------
    xe : (E, Np, 2) array or Dual
        Element node coordinates.
    tab : Tab
        Mesh-basis tabulation at the volume quadrature points.
    """

    def __init__(self, xe, tab):
        self.A = element_jacobian(xe, tab.dphi)
        self.detA = det2(self.A)
        if np.any(ad.primal(self.detA) <= 0.0):
            from .mesh import InvalidMeshError
            raise InvalidMeshError("non-positive Jacobian determinant")
        self.Ainv = inv2(self.A, self.detA)
        self.X = element_points(xe, tab.phi)


class FaceGeometry:
    """Boundary-edge geometry: points and line Jacobians at edge quadrature points.

    *faces* is an ``(F, 3)`` array of ``(element, local_edge, attribute)``.
    """

    def __init__(self, mesh, faces, xe_all, exactness):
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.faces = faces
        self.rule = segment_rule(exactness)
        tab = tabulate_edges(mesh.elem_type, mesh.order, exactness)
        basis = mesh.basis
        loc = faces[:, 1]
        elem = faces[:, 0]
        phi = tab.phi[loc]                      # (F, nq, Np)
        dphi = tab.dphi[loc]                    # (F, nq, Np, 2)
        tref = np.array([basis.edge_tangent(f) for f in range(basis.n_edges)])[loc]  # (F, 2)
        if isinstance(xe_all, ad.Dual):
            xe = xe_all[elem]
        else:
            xe = xe_all[elem]
        dxds = ad.linear(lambda v: np.einsum("...fia,fqib,fb->...fqa", v, dphi, tref), xe)
        self.jac = ad.sqrt(dxds[..., 0] * dxds[..., 0] + dxds[..., 1] * dxds[..., 1])
        self.X = ad.linear(lambda v: np.einsum("...fia,fqi->...fqa", v, phi), xe)
        self.elem = elem
        self.loc = loc

    def space_tab(self, space, exactness):
        """Space-basis values ``(F, nq, n_local)`` at the edge points."""
        tab = tabulate_edges(space.mesh.elem_type, space.order, exactness)
        return tab.phi[self.loc]


def take_elements(v, idx):
    """Index the element axis of an array or dual (tangent seed axes preserved)."""
    if isinstance(v, ad.Dual):
        t = v.tangent
        if np.ndim(t) > np.ndim(v.primal):
            lead = np.ndim(t) - np.ndim(v.primal)
            t = t[(slice(None),) * lead + (idx,)]
        elif np.ndim(t):
            t = t[idx]
        return ad.Dual(v.primal[idx], t)
    return v[idx]


# ---- evaluation ----------------------------------------------------------
def eval_field(f, e, r):
    """Value ``(vdim,)`` and physical gradient ``(vdim, 2)`` of field *f* in element *e*."""
    sp = f.space
    mesh = sp.mesh
    r = np.reshape(np.asarray(r, dtype=float), (1, 2))
    _, dphi_m = mesh.basis.eval(r)
    phi_u, dphi_u = sp.basis.eval(r)
    A = SmallMatrix.from_array(element_jacobian(mesh.element_coords()[e], dphi_m)[0])
    det = A.det()
    if abs(det) < 1e-300:
        raise SingularMatrixError("singular Jacobian")
    Ainv = np.array(A.inv(det).to_array(), dtype=float)
    ue = f.element_values()[e]              # (vdim, n_local)
    value = ue @ phi_u[0]
    gref = ue @ dphi_u[0]                   # (vdim, 2)
    return value, gref @ Ainv


def element_matrices_mass(space, xe=None, exactness=None):
    mesh = space.mesh
    ex = exactness or space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    geo = Geometry(mesh.element_coords() if xe is None else xe, tab_m)
    w = rule.weights * geo.detA
    return np.einsum("eq,qi,qj->eij", w, tab_u.phi, tab_u.phi)


def element_matrices_stiffness(space, xe=None, exactness=None):
    """Scalar Laplacian element matrices ``int grad phi_i . grad phi_j``."""
    mesh = space.mesh
    ex = exactness or space.quad_exactness()
    rule = quad_rule(mesh.elem_type, ex)
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, space.order, ex)
    geo = Geometry(mesh.element_coords() if xe is None else xe, tab_m)
    G = np.einsum("eqba,qjb->eqja", geo.Ainv, tab_u.dphi)   # physical basis gradients
    w = rule.weights * geo.detA
    return np.einsum("eq,eqia,eqja->eij", w, G, G)


def scatter_matrix(dofs, Ke, n, symmetric=False):
    """Assemble element matrices ``(E, k, k)`` over DOF map ``(E, k)`` into CSR."""
    rows = np.broadcast_to(dofs[:, :, None], Ke.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], Ke.shape).ravel()
    return SparseMatrix.from_coo(rows, cols, Ke.ravel(), (n, n), symmetric)


def scatter_vector(dofs, Fe, n):
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), np.asarray(Fe).ravel())
    return out


def block_diag(Ke, vdim):
    """Repeat scalar element matrices on the diagonal blocks of a vector space."""
    E, k, _ = Ke.shape
    out = np.zeros((E, vdim * k, vdim * k))
    for c in range(vdim):
        out[:, c * k:(c + 1) * k, c * k:(c + 1) * k] = Ke
    return out


def assemble_mass(space, vdim=None):
    """Mass matrix of *space* (block-diagonal over ``vdim`` components)."""
    vdim = space.vdim if vdim is None else vdim
    Me = element_matrices_mass(space)
    vs = Space(space.mesh, space.order, vdim, _dofs=(space.dofs, space.n_scalar))
    return scatter_matrix(vs.vector_dofs(), block_diag(Me, vdim), vs.ndofs, symmetric=True)


def assemble_stiffness(space, vdim=None):
    vdim = space.vdim if vdim is None else vdim
    Ke = element_matrices_stiffness(space)
    vs = Space(space.mesh, space.order, vdim, _dofs=(space.dofs, space.n_scalar))
    return scatter_matrix(vs.vector_dofs(), block_diag(Ke, vdim), vs.ndofs, symmetric=True)


def quadrature_values(f, exactness=None):
    """Field values ``(E, nq, vdim)`` and physical gradients ``(E, nq, vdim, 2)``."""
    sp = f.space
    mesh = sp.mesh
    ex = exactness or sp.quad_exactness()
    tab_m = tabulate(mesh.elem_type, mesh.order, ex)
    tab_u = tabulate(mesh.elem_type, sp.order, ex)
    geo = Geometry(mesh.element_coords(), tab_m)
    ue = f.element_values()
    vals = np.einsum("eci,qi->eqc", ue, tab_u.phi)
    gref = np.einsum("eci,qib->eqcb", ue, tab_u.dphi)
    return vals, phys_grad(geo.Ainv, gref), geo


def l2_error(f, exact, exactness=None):
    """``||f - exact||_{L2}``; *exact* maps ``(n, 2)`` points to ``(n,)`` or ``(vdim, n)``."""
    sp = f.space
    ex = exactness or 2 * sp.order + 5
    ex = max(ex, default_exactness(sp.mesh.order, sp.order))
    rule = quad_rule(sp.mesh.elem_type, min(ex, 20))
    vals, _, geo = quadrature_values(f, rule.exactness)
    X = geo.X.reshape(-1, 2)
    ref = np.asarray(exact(X), dtype=float).reshape(sp.vdim, -1).T.reshape(vals.shape)
    err2 = np.einsum("q,eq,eqc->", rule.weights, geo.detA, (vals - ref) ** 2)
    return float(np.sqrt(err2))


def h1_seminorm_error(f, exact_grad, exactness=None):
    """``|f - exact|_{H1}``; *exact_grad* maps points to ``(n, 2)`` (scalar fields)."""
    sp = f.space
    ex = exactness or 2 * sp.order + 5
    ex = max(ex, default_exactness(sp.mesh.order, sp.order))
    rule = quad_rule(sp.mesh.elem_type, min(ex, 20))
    _, grads, geo = quadrature_values(f, rule.exactness)
    X = geo.X.reshape(-1, 2)
    ref = np.asarray(exact_grad(X), dtype=float).reshape(grads.shape)
    err2 = np.einsum("q,eq,eqcb->", rule.weights, geo.detA, (grads - ref) ** 2)
    return float(np.sqrt(err2))


def integrate(f, exactness=None):
    """Integral of each component of field *f* over the domain."""
    sp = f.space
    rule = quad_rule(sp.mesh.elem_type, exactness or sp.quad_exactness())
    vals, _, geo = quadrature_values(f, rule.exactness)
    return np.einsum("q,eq,eqc->c", rule.weights, geo.detA, vals)
