"""High-order curvilinear meshes in 2D.

Nodes of an order-``p`` element sit on the equispaced lattice of its
reference element (``[0,1]^2`` for quads, the unit right triangle for
tris) and are ordered lexicographically.  Coordinates are stored as one
flat, component-major vector: all x-coordinates, then all y-coordinates.
"""

from functools import cached_property, lru_cache

import numpy as np

from . import dual as ad
from .linalg import SmallMatrix
from .quadrature import quad_rule

QUAD, TRI = "quad", "tri"

# reference vertices (counter-clockwise) and edges as vertex pairs
_REF_VERTICES = {
    QUAD: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    TRI: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
}
_REF_EDGES = {
    QUAD: ((0, 1), (1, 2), (2, 3), (3, 0)),
    TRI: ((0, 1), (1, 2), (2, 0)),
}


class InvalidMeshError(ValueError):
    """The mesh has a non-positive Jacobian determinant somewhere."""


def _lagrange_1d(nodes, x):
    """Values and derivatives of 1D Lagrange polynomials at points *x*."""
    n = len(nodes)
    x = np.asarray(x, dtype=float)
    vals = np.ones((x.size, n))
    ders = np.zeros((x.size, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        denom = np.prod([nodes[i] - nodes[j] for j in others])
        for j in others:
            vals[:, i] *= x - nodes[j]
        for k in others:
            term = np.ones(x.size)
            for j in others:
                if j != k:
                    term *= x - nodes[j]
            ders[:, i] += term
        vals[:, i] /= denom
        ders[:, i] /= denom
    return vals, ders


class RefBasis:
    """Lagrange basis of order ``p`` on a reference element.

    Attributes
    ----------
    nodes : (Np, 2) array
        Interpolation nodes in reference coordinates.
    lattice : (Np, 2) int array
        Integer lattice coordinates ``p * nodes``.
    vertex_ids : tuple
        Local ids of the element vertices, counter-clockwise.
    """

    def __init__(self, elem_type, order):
        if elem_type not in (QUAD, TRI):
            raise ValueError(f"unsupported element type {elem_type!r}")
        if order < 1:
            raise ValueError("order must be >= 1")
        self.elem_type = elem_type
        self.order = p = int(order)
        if elem_type == QUAD:
            lat = [(i, j) for j in range(p + 1) for i in range(p + 1)]
        else:
            lat = [(i, j) for j in range(p + 1) for i in range(p + 1 - j)]
        self.lattice = np.array(lat, dtype=int)
        self.nodes = self.lattice / p
        self.n = len(lat)
        index = {tuple(v): k for k, v in enumerate(lat)}
        self.vertex_ids = tuple(index[tuple(int(round(c)) for c in p * v)]
                                for v in _REF_VERTICES[elem_type])
        self.ref_vertices = _REF_VERTICES[elem_type]
        self.edges = _REF_EDGES[elem_type]
        self._index = index
        if elem_type == TRI:
            self._monos = [(a, b) for b in range(p + 1) for a in range(p + 1 - b)]
            V = self._mono_vals(self.nodes)
            self._coef = np.linalg.inv(V)
        else:
            self._nodes_1d = np.linspace(0.0, 1.0, p + 1)

    def __repr__(self):
        return f"RefBasis({self.elem_type!r}, {self.order})"

    @property
    def n_edges(self):
        return len(self.edges)

    def _mono_vals(self, r):
        return np.stack([r[:, 0] ** a * r[:, 1] ** b for a, b in self._monos], axis=1)

    def eval(self, r):
        """Basis values ``(nq, Np)`` and reference gradients ``(nq, Np, 2)`` at points *r*."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        if self.elem_type == QUAD:
            vx, dx = _lagrange_1d(self._nodes_1d, r[:, 0])
            vy, dy = _lagrange_1d(self._nodes_1d, r[:, 1])
            i, j = self.lattice[:, 0], self.lattice[:, 1]
            vals = vx[:, i] * vy[:, j]
            grads = np.stack([dx[:, i] * vy[:, j], vx[:, i] * dy[:, j]], axis=2)
            return vals, grads
        x, y = r[:, 0], r[:, 1]

        def powr(v, k):
            return v ** k if k > 0 else np.ones_like(v)

        M = np.stack([powr(x, a) * powr(y, b) for a, b in self._monos], axis=1)
        Mx = np.stack([a * powr(x, a - 1) * powr(y, b) if a else np.zeros_like(x)
                       for a, b in self._monos], axis=1)
        My = np.stack([b * powr(x, a) * powr(y, b - 1) if b else np.zeros_like(x)
                       for a, b in self._monos], axis=1)
        vals = M @ self._coef
        grads = np.stack([Mx @ self._coef, My @ self._coef], axis=2)
        return vals, grads

    def edge_points(self, edge, t):
        """Reference points at parameters *t* in ``[0,1]`` along local edge *edge*."""
        a, b = self.edges[edge]
        va, vb = self.ref_vertices[a], self.ref_vertices[b]
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        return va + t * (vb - va)

    def edge_tangent(self, edge):
        a, b = self.edges[edge]
        return self.ref_vertices[b] - self.ref_vertices[a]

    @cached_property
    def edge_nodes(self):
        """Local node ids on each edge, ordered from the edge's first vertex."""
        p = self.order
        out = []
        for a, b in self.edges:
            la = self.lattice[self.vertex_ids[a]]
            lb = self.lattice[self.vertex_ids[b]]
            step = (lb - la) // p
            out.append(np.array([self._index[tuple(la + k * step)] for k in range(p + 1)]))
        return out

    def classify(self):
        """Topological class of each local node.

        Returns a list with ``("v", vertex)``, ``("e", edge, k)`` (k-th lattice
        step from the edge's first vertex) or ``("i",)`` per node.
        """
        p = self.order
        cls = [("i",)] * self.n
        for e, ids in enumerate(self.edge_nodes):
            for k, loc in enumerate(ids):
                if 0 < k < p:
                    cls[loc] = ("e", e, k)
        for v, loc in enumerate(self.vertex_ids):
            cls[loc] = ("v", v)
        return cls


@lru_cache(maxsize=None)
def ref_basis(elem_type, order):
    return RefBasis(elem_type, order)


def number_lattice(vertex_conn, basis):
    """Conforming global numbering of the order-``p`` lattice of every element.

    Vertex nodes are identified by vertex id, edge nodes by the sorted vertex
    pair plus their position counted from the lower vertex id, interior nodes
    are private to their element.  Ids are assigned in order of first
    appearance, so the lowest element id wins ties.
    """
    vertex_conn = np.asarray(vertex_conn)
    p = basis.order
    cls = basis.classify()
    keys = {}
    conn = np.empty((len(vertex_conn), basis.n), dtype=np.int64)
    for e, verts in enumerate(vertex_conn):
        for loc, c in enumerate(cls):
            if c[0] == "v":
                key = ("v", int(verts[c[1]]))
            elif c[0] == "e":
                a, b = basis.edges[c[1]]
                ga, gb = int(verts[a]), int(verts[b])
                k = c[2] if ga < gb else p - c[2]
                key = ("e", min(ga, gb), max(ga, gb), k)
            else:
                key = ("i", e, loc)
            gid = keys.get(key)
            if gid is None:
                gid = keys[key] = len(keys)
            conn[e, loc] = gid
    return conn, len(keys)


def element_jacobian(xe, dphi):
    """Jacobians ``A[..., q, a, b] = sum_i xe[..., i, a] dphi[q, i, b]``.

    *xe* may be a float array ``(..., Np, 2)`` or a dual of such arrays.
    """
    return ad.linear(lambda v: np.einsum("...ia,qib->...qab", v, dphi), xe)


def element_points(xe, phi):
    """Physical points ``X[..., q, a]`` of the element map at tabulated basis values."""
    return ad.linear(lambda v: np.einsum("...ia,qi->...qa", v, phi), xe)


def det2(A):
    """Determinant of a ``[..., 2, 2]`` array or dual."""
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


class Mesh:
    """Curvilinear mesh with fixed connectivity.

    Parameters
    ----------
    order : int
        Geometric order ``p``.
    elem_type : {"quad", "tri"}
    x : array
        Flat component-major node coordinates, length ``2 * n_nodes``.
    elements : (E, Np) int array
    boundary : (B, 3) int array
        Rows ``(node, attribute, normal_axis)``; ``normal_axis`` is 0 or 1 for
        axis-aligned faces and -1 for a fully pinned node.
    x_init : array, optional
        Frozen initial coordinates (defaults to *x*).
    """

    dim = 2

    def __init__(self, order, elem_type, x, elements, boundary, x_init=None):
        self.order = int(order)
        self.elem_type = elem_type
        self.elements = np.asarray(elements, dtype=np.int64)
        self.boundary = np.asarray(boundary, dtype=np.int64).reshape(-1, 3)
        self.x = np.array(x, dtype=float)
        self.x_init = self.x.copy() if x_init is None else np.array(x_init, dtype=float)
        basis = ref_basis(elem_type, order)
        if self.elements.ndim != 2 or self.elements.shape[1] != basis.n:
            raise ValueError(f"elements must have {basis.n} nodes for {elem_type} order {order}")
        n = self.x.size // 2
        if self.x.size != 2 * n or self.x_init.shape != self.x.shape:
            raise ValueError("coordinate vector has the wrong length")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise ValueError("element node id out of range")
        for row in self.elements:
            if len(set(row.tolist())) != len(row):
                raise ValueError("repeated node id within an element")
        for arr in (self.x, self.x_init, self.elements, self.boundary):
            arr.flags.writeable = False

    def __repr__(self):
        return (f"Mesh(order={self.order}, type={self.elem_type!r}, "
                f"elements={self.n_elements}, nodes={self.n_nodes})")

    @property
    def basis(self):
        return ref_basis(self.elem_type, self.order)

    @property
    def n_nodes(self):
        return self.x.size // 2

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def points(self):
        """Node coordinates as an ``(N, 2)`` array."""
        return self.x.reshape(2, -1).T

    @property
    def init_points(self):
        return self.x_init.reshape(2, -1).T

    def element_coords(self, x=None):
        """Element node coordinates ``(E, Np, 2)`` (from *x* if given)."""
        x = self.x if x is None else x
        pts = np.asarray(x).reshape(2, -1).T
        return pts[self.elements]

    def with_coords(self, x):
        """Same topology and ``x_init``, new coordinates."""
        return Mesh(self.order, self.elem_type, x, self.elements, self.boundary, self.x_init)

    def reset(self):
        """Mesh at its initial coordinates."""
        return self.with_coords(self.x_init)

    # ---- topology --------------------------------------------------------
    @cached_property
    def vertex_elements(self):
        return self.elements[:, list(self.basis.vertex_ids)]

    @cached_property
    def boundary_faces(self):
        """Boundary edges as rows ``(element, local_edge, attribute)``."""
        counts = {}
        basis = self.basis
        for e, verts in enumerate(self.vertex_elements):
            for f, (a, b) in enumerate(basis.edges):
                key = (min(verts[a], verts[b]), max(verts[a], verts[b]))
                counts.setdefault(key, []).append((e, f))
        attrs = {}
        for node, attr, _ in self.boundary:
            attrs.setdefault(int(node), set()).add(int(attr))
        rows = []
        for key, owners in counts.items():
            if len(owners) != 1:
                continue
            e, f = owners[0]
            nodes = self.elements[e, basis.edge_nodes[f]]
            common = None
            for nd in nodes:
                s = attrs.get(int(nd), set())
                common = s if common is None else common & s
            rows.append((e, f, min(common) if common else 0))
        rows.sort()
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def constrained(self):
        """Boolean mask over the flat coordinate vector of fixed components."""
        mask = np.zeros(2 * self.n_nodes, dtype=bool)
        n = self.n_nodes
        for node, _, axis in self.boundary:
            if axis < 0:
                mask[node] = mask[n + node] = True
            else:
                mask[axis * n + node] = True
        return mask

    def min_edge_length(self, x=None):
        pts = np.asarray(self.x_init if x is None else x).reshape(2, -1).T
        v = self.vertex_elements
        best = np.inf
        for a, b in self.basis.edges:
            best = min(best, np.min(np.linalg.norm(pts[v[:, a]] - pts[v[:, b]], axis=1)))
        return best


# ---- geometry -----------------------------------------------------------
def jacobian_at(mesh, e, r, coords=None):
    """Jacobian of element *e* at reference point *r* as a :class:`SmallMatrix`.

    *coords* optionally overrides the element's ``(Np, 2)`` node coordinates
    (floats or a dual, e.g. with one coordinate seeded).
    """
    _, dphi = mesh.basis.eval(np.reshape(r, (1, 2)))
    xe = mesh.element_coords()[e] if coords is None else coords
    A = element_jacobian(xe, dphi)[0]
    return SmallMatrix.from_array(A)


@lru_cache(maxsize=None)
def validity_samples(elem_type, order):
    """Quadrature points of exactness ``2p+3`` plus the element's nodes."""
    rule = quad_rule(elem_type, 2 * order + 3)
    pts = np.vstack([rule.points, ref_basis(elem_type, order).nodes])
    return pts, ref_basis(elem_type, order).eval(pts)[1]


def det_jacobians(mesh, x=None):
    """``det A`` at every validity sample point, shape ``(E, n_samples)``."""
    _, dphi = validity_samples(mesh.elem_type, mesh.order)
    A = element_jacobian(mesh.element_coords(x), dphi)
    return det2(A)


def min_det_jacobian(mesh, x=None):
    return float(np.min(det_jacobians(mesh, x)))


def project_displacement(mesh, w):
    """Zero the boundary-normal (and pinned) components of a displacement."""
    w = np.array(w, dtype=float)
    w[mesh.constrained] = 0.0
    return w


def apply_displacement(mesh, wt):
    """Mesh with coordinates ``x_init + P wt`` where ``P`` removes constrained components."""
    wt = np.asarray(getattr(wt, "coeffs", wt), dtype=float)
    if wt.shape != mesh.x_init.shape:
        raise ValueError(f"displacement has length {wt.size}, expected {mesh.x_init.size}")
    return mesh.with_coords(mesh.x_init + project_displacement(mesh, wt))


# ---- generation ---------------------------------------------------------
def boundary_from_faces(order, elem_type, x, elements, attr_fn, tol=1e-12):
    """Build the boundary table from the unshared edges of a mesh.

    ``attr_fn(midpoint, axis)`` returns the attribute of an edge whose normal
    is along ``axis`` (0, 1, or -1 for edges that are not axis aligned).
    """
    tmp = Mesh(order, elem_type, x, elements, np.zeros((0, 3)))
    basis = tmp.basis
    pts = tmp.points
    verts = tmp.vertex_elements
    counts = {}
    for e, vs in enumerate(verts):
        for f, (a, b) in enumerate(basis.edges):
            counts.setdefault((min(vs[a], vs[b]), max(vs[a], vs[b])), []).append((e, f))
    rows = set()
    for (va, vb), owners in counts.items():
        if len(owners) != 1:
            continue
        e, f = owners[0]
        d = pts[vb] - pts[va]
        if abs(d[0]) <= tol * max(1.0, abs(d[1])):
            axis = 0
        elif abs(d[1]) <= tol * max(1.0, abs(d[0])):
            axis = 1
        else:
            axis = -1
        attr = attr_fn(0.5 * (pts[va] + pts[vb]), axis)
        for nd in elements[e][basis.edge_nodes[f]]:
            rows.add((int(nd), int(attr), axis))
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, 3)


def box_attr_fn(domain, tol=1e-9):
    """Attributes 1..4 for the bottom, right, top and left sides of a box."""
    (x0, x1), (y0, y1) = domain
    span = max(x1 - x0, y1 - y0)

    def attr(mid, axis):
        if axis == 1 and abs(mid[1] - y0) < tol * span:
            return 1
        if axis == 0 and abs(mid[0] - x1) < tol * span:
            return 2
        if axis == 1 and abs(mid[1] - y1) < tol * span:
            return 3
        if axis == 0 and abs(mid[0] - x0) < tol * span:
            return 4
        return 5

    return attr


def _cartesian_quad(nx, ny, p, domain):
    (x0, x1), (y0, y1) = domain
    NX, NY = p * nx + 1, p * ny + 1
    xs = np.linspace(x0, x1, NX)
    ys = np.linspace(y0, y1, NY)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    x = np.concatenate([X.ravel(), Y.ravel()])
    basis = ref_basis(QUAD, p)
    li, lj = basis.lattice[:, 0], basis.lattice[:, 1]
    elems = []
    for ey in range(ny):
        for ex in range(nx):
            elems.append((p * ey + lj) * NX + p * ex + li)
    return x, np.array(elems, dtype=np.int64)


def _cartesian_tri(nx, ny, p, domain):
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    vpts = [(x, y) for y in ys for x in xs]
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    tris = []

    def add_pt(pt):
        vpts.append(pt)
        return len(vpts) - 1

    mids = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mids:
            pa, pb = vpts[a], vpts[b]
            mids[key] = add_pt(((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2))
        return mids[key]

    for j in range(ny):
        for i in range(nx):
            quad = [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
            c = add_pt(((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2))
            for k in range(4):
                a, b = quad[k], quad[(k + 1) % 4]
                mab, mbc, mca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
                tris += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
    vpts = np.array(vpts)
    tris = np.array(tris, dtype=np.int64)
    basis = ref_basis(TRI, p)
    conn, n = number_lattice(tris, basis)
    pts = np.zeros((n, 2))
    # affine map from the reference triangle
    for e, (a, b, c) in enumerate(tris):
        pa, pb, pc = vpts[a], vpts[b], vpts[c]
        loc = pa + np.outer(basis.nodes[:, 0], pb - pa) + np.outer(basis.nodes[:, 1], pc - pa)
        pts[conn[e]] = loc
    return np.concatenate([pts[:, 0], pts[:, 1]]), conn


def make_cartesian(nx, ny, p=1, elem_type=QUAD, domain=((0.0, 1.0), (0.0, 1.0))):
    """Uniform Cartesian mesh of an axis-aligned box.

    Quads give ``nx * ny`` elements.  Triangles split each quad into four
    through its center and each of those into four through edge midpoints,
    giving ``16 * nx * ny`` elements.  Boundary attributes are 1 (bottom),
    2 (right), 3 (top) and 4 (left).
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    if p not in (1, 2, 3, 4):
        raise ValueError("mesh order must be in 1..4")
    domain = tuple(tuple(map(float, d)) for d in domain)
    if elem_type == QUAD:
        x, elems = _cartesian_quad(nx, ny, p, domain)
    elif elem_type == TRI:
        x, elems = _cartesian_tri(nx, ny, p, domain)
    else:
        raise ValueError(f"unsupported element type {elem_type!r}")
    bdr = boundary_from_faces(p, elem_type, x, elems, box_attr_fn(domain))
    return Mesh(p, elem_type, x, elems, bdr)


def remove_elements(mesh, keep, attr_fn):
    """Submesh with only the elements where *keep* is true; nodes renumbered."""
    keep = np.asarray(keep, dtype=bool)
    elems = mesh.elements[keep]
    used = np.unique(elems)
    new_id = -np.ones(mesh.n_nodes, dtype=np.int64)
    new_id[used] = np.arange(len(used))
    pts = mesh.points[used]
    x = np.concatenate([pts[:, 0], pts[:, 1]])
    elems = new_id[elems]
    bdr = boundary_from_faces(mesh.order, mesh.elem_type, x, elems, attr_fn)
    return Mesh(mesh.order, mesh.elem_type, x, elems, bdr)
