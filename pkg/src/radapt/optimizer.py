"""Bound-constrained MMA, the mesh-validity line search and the outer loop.

Each iteration evaluates ``F`` and ``dF/dw``, proposes a new raw
displacement with the method of moving asymptotes (closed-form per DOF
since the only constraints are bounds), and halves the step until every
element of ``x_init + P filter(w)`` has a positive Jacobian determinant.
Optionally the step is halved further until ``F`` decreases.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import SolverError
from .mesh import InvalidMeshError, apply_displacement, min_det_jacobian

log = logging.getLogger(__name__)


class StalledStepError(RuntimeError):
    """No acceptable step after the maximum number of halvings."""


@dataclass
class OptConfig:
    """Optimizer settings.

    ``bounds_half_width`` is in units of the smallest initial edge length:
    each raw displacement component is confined to ``[-b, b]`` with
    ``b = bounds_half_width * min_edge``.
    """

    max_iters: int = 300
    grad_ratio_tol: float = 1e-3
    grad_abs_tol: float = 1e-12             # starting points this stationary are left alone
    line_search: str = "decrease"          # or "validity"
    bounds_half_width: float = 0.5
    move: float = 0.1
    asyinit: float = 0.5
    asydecr: float = 0.7
    asyincr: float = 1.2
    max_halvings: int = 60
    method: str = "mma"                    # or "pgd"
    armijo: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.line_search not in ("validity", "decrease"):
            raise ValueError("line_search must be 'validity' or 'decrease'")
        if self.method not in ("mma", "pgd"):
            raise ValueError("method must be 'mma' or 'pgd'")
        if not self.bounds_half_width > 0 or not 0 < self.move <= 1:
            raise ValueError("bounds_half_width must be positive and move in (0, 1]")


@dataclass
class MmaState:
    """Iterate history and asymptotes for the bound-constrained MMA."""

    x: np.ndarray
    xmin: np.ndarray
    xmax: np.ndarray
    xold1: np.ndarray = None
    xold2: np.ndarray = None
    low: np.ndarray = None
    upp: np.ndarray = None
    iteration: int = 0
    asyinit: float = 0.5
    asydecr: float = 0.7
    asyincr: float = 1.2
    move: float = 0.1

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.xmin = np.broadcast_to(np.asarray(self.xmin, dtype=float), self.x.shape).copy()
        self.xmax = np.broadcast_to(np.asarray(self.xmax, dtype=float), self.x.shape).copy()
        if np.any(self.xmax <= self.xmin):
            raise ValueError("bounds must satisfy xmin < xmax")
        self.x = np.clip(self.x, self.xmin, self.xmax)
        if self.xold1 is None:
            self.xold1 = self.x.copy()
        if self.xold2 is None:
            self.xold2 = self.x.copy()

    def accept(self, x_new):
        """Record an accepted iterate."""
        self.xold2 = self.xold1
        self.xold1 = self.x
        self.x = np.array(x_new, dtype=float)
        self.iteration += 1


def _asymptotes(state):
    x, span = state.x, state.xmax - state.xmin
    if state.iteration < 2:
        low = x - state.asyinit * span
        upp = x + state.asyinit * span
    else:
        osc = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.where(osc < 0, state.asydecr, np.where(osc > 0, state.asyincr, 1.0))
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
        upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
    return low, upp


def mma_update(state, grad):
    """Proposed iterate from the separable MMA approximation at ``state.x``.

    The subproblem ``min sum p_j / (U_j - x_j) + q_j / (x_j - L_j)`` over the
    move-limited box has the closed-form minimizer
    ``x = (sqrt(p) L + sqrt(q) U) / (sqrt(p) + sqrt(q))``.
    Updates the asymptotes in *state*; does not accept the proposal.
    """
    g = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")
    x, span = state.x, state.xmax - state.xmin
    low, upp = _asymptotes(state)
    state.low, state.upp = low, upp
    lo = np.maximum.reduce([state.xmin, low + 0.1 * (x - low), x - state.move * span])
    hi = np.minimum.reduce([state.xmax, upp - 0.1 * (upp - x), x + state.move * span])
    absg = np.abs(g)
    p = (upp - x) ** 2 * (np.maximum(g, 0.0) + 1e-3 * absg)
    q = (x - low) ** 2 * (np.maximum(-g, 0.0) + 1e-3 * absg)
    sp, sq = np.sqrt(p), np.sqrt(q)
    denom = sp + sq
    safe = np.where(denom > 0, denom, 1.0)
    xn = np.where(denom > 0, (sp * low + sq * upp) / safe, x)
    return np.clip(xn, lo, hi)


def validity_line_search(mesh, wt_proposed, base=None, max_halvings=60, accept=None):
    """Scale a filtered displacement until the mesh is valid.

    Tries ``wt = base + 0.5^k (wt_proposed - base)`` for ``k = 0, 1, ...``
    (``base`` defaults to zero, i.e. the displacement itself is scaled) and
    returns ``(wt, k)`` for the first ``k`` with ``min det A > 0`` on
    ``x_init + P wt`` and, if given, ``accept(wt)`` true.
    """
    wt_proposed = np.asarray(wt_proposed, dtype=float)
    base = np.zeros_like(wt_proposed) if base is None else np.asarray(base, dtype=float)
    step = wt_proposed - base
    for k in range(max_halvings + 1):
        wt = base + 0.5 ** k * step
        if min_det_jacobian(apply_displacement(mesh, wt)) > 0.0:
            if accept is None or accept(wt):
                return wt, k
    raise StalledStepError(f"no valid step after {max_halvings} halvings")


def mma_minimize(fun, grad, x0, xmin, xmax, max_iters=50, tol=0.0, decrease=True,
                 max_halvings=60, **mma_opts):
    """Bound-constrained MMA on a plain function; returns ``(x, history)``.

    With ``decrease`` the step towards each proposal is halved until ``fun``
    does not increase, which removes the chatter that pure MMA shows once the
    asymptotes reach their minimum distance.
    """
    state = MmaState(x0, xmin, xmax, **mma_opts)
    f = fun(state.x)
    history = [state.x.copy()]
    for _ in range(max_iters):
        g = grad(state.x)
        if np.linalg.norm(g) <= tol:
            break
        d = mma_update(state, g) - state.x
        for k in range(max_halvings + 1):
            x_try = state.x + 0.5 ** k * d
            f_try = fun(x_try)
            if not decrease or f_try <= f:
                break
        else:
            break
        f = f_try
        state.accept(x_try)
        history.append(state.x.copy())
    return state.x, history


@dataclass
class OptResult:
    w: np.ndarray
    mesh: object
    bundle: object
    history: list = field(default_factory=list)
    reason: str = ""
    initial: object = None


def _bounds(objective, config):
    b = config.bounds_half_width * objective.base.min_edge_length()
    return -b * np.ones(objective.size), b * np.ones(objective.size)


def optimize(objective, config=None, w0=None, callback=None):
    """Minimize ``objective`` over raw displacements.

    Returns an :class:`OptResult`; ``history`` holds one dict per accepted
    iterate (iteration 0 is the starting point) with ``F``, ``F_P``, ``F_mu``,
    ``grad_norm``, ``min_det``, ``halvings`` and ``time``.
    """
    config = config or OptConfig()
    t0 = time.perf_counter()
    xmin, xmax = _bounds(objective, config)
    w = np.zeros(objective.size) if w0 is None else np.clip(np.asarray(w0, float), xmin, xmax)
    bundle = objective.evaluate(w)
    g0 = np.linalg.norm(bundle.dFdw)
    history = [_record(0, bundle, 0, t0)]
    result = OptResult(w, bundle.mesh, bundle, history, initial=bundle)
    if callback:
        callback(history[-1])
    if g0 <= config.grad_abs_tol:
        result.reason = "zero gradient"
        return result
    state = MmaState(w, xmin, xmax, asyinit=config.asyinit, asydecr=config.asydecr,
                     asyincr=config.asyincr, move=config.move)
    step_len = None
    for it in range(1, config.max_iters + 1):
        grad = bundle.dFdw
        if config.method == "mma":
            proposal = mma_update(state, grad)
        else:
            if step_len is None:
                step_len = config.move * (xmax - xmin).max() / max(np.abs(grad).max(), 1e-300)
            proposal = np.clip(w - step_len * grad, xmin, xmax)
        try:
            w_new, new_bundle, k = _line_search(objective, config, w, proposal, bundle, grad)
        except StalledStepError as exc:
            result.reason = f"stalled: {exc}"
            log.info("iteration %d: %s", it, result.reason)
            break
        if config.method == "mma":
            state.accept(w_new)
        else:
            step_len *= 0.5 ** k * (2.0 if k == 0 else 1.0)
        w, bundle = w_new, new_bundle
        if not bundle.diagnostics["min_det"] > 0.0:
            raise InvalidMeshError("accepted an invalid mesh")
        history.append(_record(it, bundle, k, t0))
        if callback:
            callback(history[-1])
        log.debug("iteration %d: F=%.6e |g|=%.3e halvings=%d", it, bundle.F,
                  history[-1]["grad_norm"], k)
        result.w, result.mesh, result.bundle = w, bundle.mesh, bundle
        if np.linalg.norm(bundle.dFdw) < config.grad_ratio_tol * g0:
            result.reason = "gradient ratio"
            break
    else:
        result.reason = "max iterations"
    return result


def _line_search(objective, config, w, proposal, bundle, grad):
    """Halve ``proposal - w`` until valid (and, optionally, decreasing)."""
    d = proposal - w
    pgd = config.method == "pgd"
    need_decrease = config.line_search == "decrease" or pgd
    for k in range(config.max_halvings + 1):
        w_try = w + 0.5 ** k * d
        mesh = objective.mesh_for(w_try)
        if not min_det_jacobian(mesh) > 0.0:
            continue
        try:
            trial = objective.evaluate(w_try, gradient=False, mesh=mesh)
        except (InvalidMeshError, SolverError):
            continue
        if need_decrease:
            slack = config.armijo * float(grad @ (w_try - w)) if pgd else 0.0
            if not trial.F <= bundle.F + slack:
                continue
        try:
            return w_try, objective.complete(trial), k
        except SolverError as exc:
            # adjoint solve failed on a badly conditioned mesh: shorten the step
            log.info("halving %d: adjoint solve failed (%s)", k, exc)
    raise StalledStepError(f"no acceptable step after {config.max_halvings} halvings")


def _record(it, bundle, k, t0):
    return {"iter": it, "F": bundle.F, "F_P": bundle.F_P, "F_mu": bundle.F_mu,
            "grad_norm": float(np.linalg.norm(bundle.dFdw)),
            "min_det": bundle.diagnostics["min_det"], "halvings": k,
            "time": time.perf_counter() - t0}
