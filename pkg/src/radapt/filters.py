"""Helmholtz-type smoothing filter for mesh displacements.

Each displacement component is smoothed by solving

    delta^2 int grad wt . grad v + int wt v = int w v    for all v,

with natural boundary conditions, i.e. ``wt = H^-1 M w`` where
``H = delta^2 K + M``.  The operator is assembled once (by default on the
initial coordinates) so the map ``w -> wt`` is linear and its adjoint
``M H^-1`` is exact.
"""

import numpy as np

from .fespace import FieldVector, Space, assemble_mass, assemble_stiffness
from .linalg import SparseMatrix, pcg_solve

FILTER_RTOL = 1e-12


class FilterOp:
    """Assembled filter on the mesh's geometric space (``vdim = 2``).

    Parameters
    ----------
    mesh : Mesh
        Mesh whose topology defines the filter space.
    delta2 : float
        Squared filter radius; ``0`` gives the identity map.
    geometry : {"frozen", "current"}
        Assemble on ``x_init`` or on the mesh's present coordinates.
    """

    def __init__(self, mesh, delta2=0.005, geometry="frozen"):
        if delta2 < 0:
            raise ValueError("filter radius must be non-negative")
        if geometry not in ("frozen", "current"):
            raise ValueError("filter geometry must be 'frozen' or 'current'")
        base = mesh.reset() if geometry == "frozen" else mesh
        self.delta2 = float(delta2)
        self.geometry = geometry
        self.space = Space(base, base.order, 1)
        self.n = base.n_nodes
        self.M = assemble_mass(self.space)
        if self.delta2 > 0:
            K = assemble_stiffness(self.space)
            self.H = SparseMatrix.from_scipy(self.delta2 * K.csr + self.M.csr, symmetric=True)
        else:
            self.H = None
        self.history = []

    @property
    def identity(self):
        return self.H is None

    def _components(self, v):
        v = np.asarray(getattr(v, "coeffs", v), dtype=float)
        if v.shape != (2 * self.n,):
            raise ValueError(f"expected a vector of length {2 * self.n}, got {v.shape}")
        return v.reshape(2, self.n)

    def _solve(self, b):
        return pcg_solve(self.H, b, rtol=FILTER_RTOL, history=self.history)


def filter_apply(op, w):
    """Filtered displacement ``H^-1 M w`` (flat component-major array)."""
    wc = op._components(w)
    if op.identity:
        return wc.ravel().copy()
    return np.concatenate([op._solve(op.M @ wc[c]) for c in range(2)])


def filter_adjoint_apply(op, g):
    """Pull a sensitivity back through the filter: ``M H^-1 g``."""
    gc = op._components(g)
    if op.identity:
        return gc.ravel().copy()
    return np.concatenate([op.M @ op._solve(gc[c]) for c in range(2)])


def filter_field(op, w):
    """:func:`filter_apply` returning a vector :class:`FieldVector`."""
    sp = Space(op.space.mesh, op.space.order, 2, _dofs=(op.space.dofs, op.space.n_scalar))
    return FieldVector(sp, filter_apply(op, w))
