"""Total objective and its adjoint gradient with respect to the raw displacement.

The pipeline evaluated for a raw displacement ``w`` is

    wt = filter(w),  x = x_init + P wt,  K(x) u = F(x),
    F(w) = alpha F_P(u, x) + F_mu(x),

where ``P`` zeroes boundary-normal components.  The gradient is

    dF/dx = dF_mu/dx + alpha dF_P/dx - lambda^T dR/dx,   K lambda = alpha dF_P/du,

pulled back through ``P`` and the filter adjoint.  For the gradient
continuity measure the projection ``M g = B u`` adds one mass solve
``M mu = dF_P/dg``, the load term ``B^T mu`` and the shape term
``-mu^T dR_pi/dx``.
"""

from dataclasses import dataclass, field

import numpy as np

from .fespace import FieldVector, Space
from .filters import FilterOp, filter_adjoint_apply, filter_apply
from .linalg import pcg_solve
from .measures import (check_kind, measure_partials, measure_value, project_gradient,
                       projection_operators, projection_shape_vjp)
from .mesh import apply_displacement, min_det_jacobian, project_displacement
from .physics import residual_shape_vjp, solve_forward, solve_linear
from .tmop import TargetSpec, fmu_grad, fmu_value


@dataclass
class GradientBundle:
    F: float
    F_P: float
    F_mu: float
    dFdw: np.ndarray = None
    dFdx: np.ndarray = None
    mesh: object = None
    u: object = None
    diagnostics: dict = field(default_factory=dict)


class Objective:
    """``F(w) = alpha F_P + F_mu`` for a fixed problem, measure and base mesh.

    Parameters
    ----------
    problem : ProblemDef
    mesh : Mesh
        Base mesh; its ``x_init`` is the reference configuration.
    order : int
        Solution order ``p_u``.
    measure : str
        One of ``local_variation``, ``load_functional``, ``grad_continuity``.
    spec : TargetSpec
    metric : {"mu2", "nu107"}
    alpha : float
    filter_op : FilterOp, optional
        Defaults to the identity (no smoothing).
    """

    def __init__(self, problem, mesh, order, measure, spec=None, metric="mu2", alpha=1.0,
                 filter_op=None):
        check_kind(measure, problem)
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.problem = problem
        self.base = mesh.reset()
        self.order = order
        self.measure = measure
        self.spec = spec or TargetSpec()
        self.metric = metric
        self.alpha = float(alpha)
        self.filter_op = filter_op if filter_op is not None else FilterOp(self.base, 0.0)
        self.space0 = Space(self.base, order, problem.vdim)
        self.n_evals = 0

    @property
    def size(self):
        return self.base.x.size

    def mesh_for(self, w):
        """Mesh for raw displacement *w* (filtered and boundary-projected)."""
        return apply_displacement(self.base, filter_apply(self.filter_op, w))

    def evaluate(self, w, gradient=True, mesh=None):
        """Objective (and gradient) at raw displacement *w*."""
        self.n_evals += 1
        mesh = self.mesh_for(w) if mesh is None else mesh
        diag = {"min_det": min_det_jacobian(mesh), "solves": []}
        its = diag["solves"]
        space = self.space0.with_mesh(mesh)
        u, system = solve_forward(self.problem, space, history=its)
        g = None
        if self.measure == "grad_continuity":
            g = project_gradient(u, history=its)
        F_mu = fmu_value(mesh, self.spec, self.metric)
        F_P = measure_value(self.measure, u, g, self.problem)
        out = GradientBundle(self.alpha * F_P + F_mu, F_P, F_mu, mesh=mesh, u=u,
                             diagnostics=diag)
        diag["_state"] = (system, g)
        if gradient:
            self.complete(out)
        return out

    def complete(self, bundle):
        """Add ``dF/dx`` and ``dF/dw`` to a bundle from ``evaluate(..., gradient=False)``."""
        if bundle.dFdw is not None:
            return bundle
        system, g = bundle.diagnostics.pop("_state")
        u, mesh = bundle.u, bundle.mesh
        its = bundle.diagnostics["solves"]
        dfdu, dfdg, dfdx = measure_partials(self.measure, u, g, self.problem)
        dfdx = self.alpha * dfdx
        load = self.alpha * dfdu
        if dfdg is not None:
            M, B = projection_operators(u.space)
            mu = pcg_solve(M, self.alpha * dfdg, rtol=1e-12, history=its)
            load = load + B.T @ mu
            dfdx = dfdx - projection_shape_vjp(u, g, mu)
        load[system.fixed] = 0.0
        lam = FieldVector(u.space, solve_linear(self.problem, system.K, load, its))
        dfdx = dfdx + fmu_grad(mesh, self.spec, self.metric)
        if np.any(lam.coeffs):
            dfdx = dfdx - residual_shape_vjp(self.problem, u, lam)
        bundle.dFdx = dfdx
        bundle.dFdw = filter_adjoint_apply(self.filter_op, project_displacement(mesh, dfdx))
        bundle.diagnostics["adjoint"] = lam
        return bundle

    def value(self, w):
        return self.evaluate(w, gradient=False).F

    def __call__(self, w):
        return self.value(w)


def total_gradient(problem, measure, spec, metric, alpha, filter_op, w, mesh, order=None):
    """One-shot :class:`GradientBundle` at raw displacement *w*."""
    obj = Objective(problem, mesh, order or mesh.order, measure, spec, metric, alpha, filter_op)
    return obj.evaluate(np.asarray(w, dtype=float))


def fd_gradient_check(pipeline, w, grad, steps=(1e-6,), indices=None, threshold=1e-8,
                      richardson=False):
    """Compare *grad* with central differences of the scalar *pipeline* at *w*.

    With ``richardson=True`` each step ``h`` uses the extrapolated difference
    ``(4 D(h/2) - D(h)) / 3``, which is fourth-order accurate and so allows
    larger steps, away from the roundoff floor.

    Returns a dict with, per step, the finite differences and the maximum
    relative error over the checked components whose finite-difference
    magnitude exceeds *threshold*; ``max_rel_error`` is the best over steps.
    """
    w = np.asarray(w, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if indices is None:
        indices = np.arange(w.size)

    def central(i, h):
        wp = w.copy()
        wp[i] += h
        wm = w.copy()
        wm[i] -= h
        return (pipeline(wp) - pipeline(wm)) / (2.0 * h)

    report = {"indices": np.asarray(indices), "steps": {}}
    for h in steps:
        if h <= 0:
            raise ValueError("finite-difference steps must be positive")
        fd = np.zeros(len(indices))
        for k, i in enumerate(indices):
            if richardson:
                fd[k] = (4.0 * central(i, 0.5 * h) - central(i, h)) / 3.0
            else:
                fd[k] = central(i, h)
        g = grad[indices]
        mask = np.abs(fd) > threshold
        rel = np.abs(g[mask] - fd[mask]) / np.abs(fd[mask])
        report["steps"][h] = {"fd": fd, "max_rel_error": float(rel.max()) if rel.size else 0.0,
                              "checked": int(mask.sum())}
    report["max_rel_error"] = min(v["max_rel_error"] for v in report["steps"].values())
    return report
