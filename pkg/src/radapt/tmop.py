"""Target-matrix mesh quality: targets, the metrics mu_2 and nu_107, and F_mu.

The quality objective is

    F_mu(x) = sum_e int_{ref} det(W) mu(A W^-1) dr,

evaluated with the reference quadrature rule so that ideal targets (W = I)
reduce to reference-measure weighting.  The gradient with respect to the
node positions comes from forward-mode dual numbers, one seed per local
coordinate, in :mod:`radapt.kernels`.
"""

from dataclasses import dataclass

import numpy as np

from . import dual as ad
from . import kernels
from .fespace import tabulate
from .linalg import SmallMatrix
from .mesh import InvalidMeshError, element_points
from .quadrature import quad_rule

METRICS = {"mu2": 0, "nu107": 1}
TARGETS = ("ideal_shape", "ideal_shape_oriented")

_TRI_W = np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])


class BarrierError(ad.DomainError, InvalidMeshError):
    """Metric evaluated on an inverted or degenerate element."""


@dataclass
class TargetSpec:
    """Target construction.

    ``theta(x, y)`` gives the orientation angle for ``ideal_shape_oriented``;
    it must be written with :mod:`radapt.dual` functions so its spatial
    derivative is available.
    """

    kind: str = "ideal_shape"
    theta: object = None

    def __post_init__(self):
        if self.kind not in TARGETS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "ideal_shape_oriented" and self.theta is None:
            raise ValueError("oriented target needs an orientation callback")


def inclined_theta(x, y):
    """Orientation field ``pi y (1 - y) cos(2 pi x)``."""
    return np.pi * y * (1.0 - y) * ad.cos(2.0 * np.pi * x)


def metric_code(metric):
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    return METRICS[metric]


def _rotation(theta):
    c, s = ad.cos(theta), ad.sin(theta)
    return SmallMatrix([[c, s], [-s, c]])


def build_target(spec, elem_type, x_phys=None):
    """Target Jacobian ``W`` at physical point(s) *x_phys* as a :class:`SmallMatrix`.

    Entries are arrays (or duals) shaped like ``x_phys[..., 0]`` for oriented
    targets and plain floats for ideal ones.
    """
    if spec.kind == "ideal_shape":
        if elem_type == "tri":
            return SmallMatrix(_TRI_W.tolist())
        return SmallMatrix.identity(2)
    if x_phys is None:
        raise ValueError("oriented targets need a physical position")
    theta = spec.theta(x_phys[..., 0], x_phys[..., 1])
    R = _rotation(theta)
    if elem_type == "tri":
        R = R @ SmallMatrix(_TRI_W.tolist())
    return R


def metric_mu2(T):
    """Shape metric ``|T|^2 / (2 det T) - 1``."""
    tau = T.det()
    if np.any(np.asarray(ad.primal(tau)) <= 0.0):
        raise BarrierError("mu_2 needs det T > 0")
    return T.fro2() / (2.0 * tau) - 1.0


def metric_nu107(A, W):
    """Shape+orientation metric ``0.5 / det A * |A - (|A| / |W|) W|^2``."""
    detA = A.det()
    if np.any(np.asarray(ad.primal(detA)) <= 0.0):
        raise BarrierError("nu_107 needs det A > 0")
    ratio = A.fro() / W.fro()
    return 0.5 * (A - W * ratio).fro2() / detA


def weighted_metric(metric, A, W):
    """``det(W) * mu`` for metric code or name *metric*."""
    if isinstance(metric, str):
        metric = metric_code(metric)
    detW = W.det()
    if np.any(np.asarray(ad.primal(A.det())) <= 0.0):
        raise BarrierError("non-positive Jacobian determinant")
    if metric == 0:
        mu = metric_mu2(A @ W.inv(detW))
    else:
        mu = metric_nu107(A, W)
    return detW * mu


def _rule(mesh):
    ex = 2 * mesh.order + 3
    return quad_rule(mesh.elem_type, ex), tabulate(mesh.elem_type, mesh.order, ex)


def target_arrays(spec, mesh, xe, want_deriv=True):
    """Targets ``W (E, nq, 2, 2)`` at the quadrature points, and ``dW/dX (E, nq, 2, 2, 2)``.

    The derivative is ``None`` for targets that do not depend on position.
    """
    rule, tab = _rule(mesh)
    E, nq = xe.shape[0], len(rule)
    if spec.kind == "ideal_shape":
        W0 = _TRI_W if mesh.elem_type == "tri" else np.eye(2)
        return np.ascontiguousarray(np.broadcast_to(W0, (E, nq, 2, 2))), None
    X = element_points(xe, tab.phi)                       # (E, nq, 2)
    if not want_deriv:
        W = build_target(spec, mesh.elem_type, X).to_array()
        return np.ascontiguousarray(np.broadcast_to(W, (E, nq, 2, 2))), None
    t = np.zeros((2, E, nq, 2))
    t[0, ..., 0] = 1.0
    t[1, ..., 1] = 1.0
    W = build_target(spec, mesh.elem_type, ad.Dual(X, t)).to_array()
    Wp = np.ascontiguousarray(np.broadcast_to(ad.primal(W), (E, nq, 2, 2)))
    dW = np.broadcast_to(np.asarray(ad.tangent(W)), (2, E, nq, 2, 2))
    return Wp, np.ascontiguousarray(np.moveaxis(dW, 0, -1))


def _evaluate(mesh, spec, metric, x, want_grad):
    code = metric_code(metric)
    rule, tab = _rule(mesh)
    xe = np.ascontiguousarray(mesh.element_coords(x), dtype=float)
    W, dW = target_arrays(spec, mesh, xe, want_deriv=want_grad)
    vals, g, ok = kernels.tmop_eval(xe, np.ascontiguousarray(tab.phi),
                                    np.ascontiguousarray(tab.dphi),
                                    np.ascontiguousarray(rule.weights), W, dW, code, want_grad)
    if not ok:
        raise BarrierError("mesh quality evaluated on an invalid mesh")
    return np.asarray(vals), (None if g is None else np.asarray(g))


def fmu_element_values(mesh, spec, metric, x=None):
    """Per-element quality integrals ``(E,)``."""
    return _evaluate(mesh, spec, metric, x, False)[0]


def fmu_value(mesh, spec, metric, x=None):
    """``F_mu`` at the mesh coordinates (or at *x*)."""
    return float(np.sum(fmu_element_values(mesh, spec, metric, x)))


def fmu_grad(mesh, spec, metric, x=None):
    """Gradient of ``F_mu`` with respect to the flat coordinate vector."""
    _, ge = _evaluate(mesh, spec, metric, x, True)
    n = mesh.n_nodes
    g = np.zeros(2 * n)
    for a in range(2):
        np.add.at(g, a * n + mesh.elements, ge[:, :, a])
    return g
