"""Acceptance criteria, one test each.

Each test records a ``CRITERION n: PASS|FAIL ...`` line (printed in the
terminal summary) and then asserts.  The optimization runs for criteria
3-5 are cached per module so criterion 8 can inspect their histories.
Expect about ten minutes in total.
"""

import time

import numpy as np
import pytest

from radapt.fespace import FieldVector, Space, integrate, interpolate, l2_error
from radapt.filters import FilterOp, filter_adjoint_apply, filter_apply
from radapt.linalg import SmallMatrix
from radapt.mesh import apply_displacement, make_cartesian, min_det_jacobian
from radapt.optimizer import OptConfig, optimize, validity_line_search
from radapt.physics import ProblemDef, elastic_energy, solve_forward
from radapt.problems import beam, circular2d, inclined2d, shearwall
from radapt.sensitivity import Objective, fd_gradient_check
from radapt.tmop import TargetSpec, fmu_grad, fmu_value, inclined_theta, metric_mu2, metric_nu107

from conftest import ACCEPTANCE_LINES, central_fd, perturbed

ORIENTED = TargetSpec("ideal_shape_oriented", inclined_theta)
# tuned weights for the 16x16 Q2 circular shock; the load functional is dominated
# by the penalty boundary term (F_P ~ -7.6e5), hence its much smaller weight
CRIT3_ALPHA = {"local_variation": 1e5, "grad_continuity": 1e5, "load_functional": 1e2}
CRIT4_ALPHAS = (0.0, 4e3, 4e4, 4e6)
RUN = dict(max_iters=60, bounds_half_width=2.0)


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def tip(u):
    X = u.space.dof_points()
    i = np.argmin((X[:, 0] - 1.0) ** 2 + X[:, 1] ** 2)
    return np.array([u.component(0)[i], u.component(1)[i]])


# ---- cached optimization runs ----------------------------------------------
@pytest.fixture(scope="module")
def crit3_runs():
    c = circular2d(16, p=2)
    out = {}
    for measure, alpha in CRIT3_ALPHA.items():
        t = time.perf_counter()
        obj = Objective(c.problem, c.mesh, 2, measure, TargetSpec(), "mu2", alpha,
                        FilterOp(c.mesh, 0.005))
        r = optimize(obj, OptConfig(**RUN))
        out[measure] = (r, l2_error(r.initial.u, c.exact), l2_error(r.bundle.u, c.exact),
                        time.perf_counter() - t)
    return out


@pytest.fixture(scope="module")
def crit4_runs():
    c = inclined2d(16, p=2)
    out = {}
    t = time.perf_counter()
    for alpha in CRIT4_ALPHAS:
        obj = Objective(c.problem, c.mesh, 2, "local_variation", ORIENTED, "nu107", alpha,
                        FilterOp(c.mesh, 0.005))
        r = optimize(obj, OptConfig(**RUN))
        out[alpha] = (r, l2_error(r.initial.u, c.exact), l2_error(r.bundle.u, c.exact))
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def crit5_runs():
    ref = beam(20, 8, p=1, p_u=4)
    ref.problem.solver = "direct"
    u_ref, _ = solve_forward(ref.problem, Space(ref.mesh, 4, 2))
    c = beam(10, 4, p=1)
    obj = Objective(c.problem, c.mesh, c.order, "load_functional", TargetSpec(), "mu2", 1e6,
                    FilterOp(c.mesh, 0.005))
    # the smallest beam edge is the thin direction (0.025), so the box is
    # widened to let nodes travel along the axis
    rb = optimize(obj, OptConfig(max_iters=150, bounds_half_width=8.0))
    w = shearwall(24, p=2)
    obj = Objective(w.problem, w.mesh, w.order, "load_functional", TargetSpec(), "mu2", 1e6,
                    FilterOp(w.mesh, 0.005))
    rw = optimize(obj, OptConfig(**RUN))
    return tip(u_ref), rb, rw


# ---- criteria ----------------------------------------------------------------
def test_criterion_1_adjoint_gradient():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    mesh = make_cartesian(3, 3, 2)
    # homogeneous data: with u_b != 0 the penalty load makes F ~ 1e6 and the
    # differences of the load functional drown in roundoff
    poisson = ProblemDef(kind="poisson", source=lambda x, y: 1 + 10 * x * y,
                         dirichlet_attrs={1, 2, 3, 4}, solver="direct")
    elastic = ProblemDef(kind="elasticity", dirichlet_attrs={4}, neumann_attrs={3},
                         neumann=lambda x, y: (0 * x, -1 + 0 * x), solver="direct")
    cases = [(poisson, m) for m in ("local_variation", "load_functional", "grad_continuity")]
    cases += [(elastic, m) for m in ("local_variation", "load_functional")]
    errs = {}
    for prob, measure in cases:
        obj = Objective(prob, mesh, 2, measure, ORIENTED, "nu107", 10.0, FilterOp(mesh, 0.005))
        w = rng.uniform(-0.05, 0.05, mesh.x.size) * mesh.min_edge_length()
        b = obj.evaluate(w)
        rep = fd_gradient_check(obj, w, b.dFdw, steps=(1e-3,), richardson=True)
        errs[f"{prob.kind}/{measure}"] = rep["max_rel_error"]
    dt = time.perf_counter() - t
    worst = max(errs.values())
    record(1, worst < 1e-5 and dt < 60,
           f"max rel err {worst:.2e} over {len(errs)} cases (< 1e-5), {dt:.0f} s (< 60 s)")


def test_criterion_2_convergence_rates():
    t = time.perf_counter()
    slopes = {}
    for p in (1, 2, 3):
        hs, errs = [], []
        for n in (4, 8, 16, 32):
            c = circular2d(n, p=p)
            u, _ = solve_forward(c.problem, Space(c.mesh, p))
            hs.append(1.0 / n)
            errs.append(l2_error(u, c.exact))
        slopes[p] = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    dt = time.perf_counter() - t
    ok = all(abs(slopes[p] - (p + 1)) <= 0.2 for p in slopes) and dt < 120
    record(2, ok, "L2 slopes " + ", ".join(f"p={p}: {s:.2f}" for p, s in slopes.items())
           + f" (target p+1 +- 0.2), {dt:.0f} s")


def test_criterion_3_error_reduction(crit3_runs):
    ratios = {m: e1 / e0 for m, (_, e0, e1, _) in crit3_runs.items()}
    times = {m: v[3] for m, v in crit3_runs.items()}
    ok = (all(r <= 0.5 for r in ratios.values()) and min(ratios.values()) <= 0.15
          and all(t < 300 for t in times.values()))
    record(3, ok, "L2 ratio " + ", ".join(f"{m} {ratios[m]:.3f} ({times[m]:.0f} s)" for m in ratios)
           + " (all <= 0.5, one <= 0.15, < 300 s each)")


def test_criterion_4_alpha_sweep(crit4_runs):
    runs, dt = crit4_runs
    FP = {a: r.bundle.F_P for a, (r, _, _) in runs.items()}
    Fmu = {a: r.bundle.F_mu for a, (r, _, _) in runs.items()}
    L2 = {a: e1 for a, (_, _, e1) in runs.items()}
    Fmu0 = runs[0.0][0].initial.F_mu
    checks = {
        "a": FP[0.0] > FP[4e3] > FP[4e4],
        "b": Fmu[0.0] < Fmu0,
        "c": Fmu[4e6] >= 3 * Fmu[4e4],
        "d": L2[4e6] > L2[4e4],
    }
    detail = (" ".join(f"({k}) {'ok' if v else 'fails'}" for k, v in checks.items())
              + "; F_P " + "/".join(f"{FP[a]:.4g}" for a in CRIT4_ALPHAS)
              + f"; F_mu {Fmu0:.4g} -> " + "/".join(f"{Fmu[a]:.4g}" for a in CRIT4_ALPHAS)
              + "; L2 " + "/".join(f"{L2[a]:.3g}" for a in CRIT4_ALPHAS) + f"; {dt:.0f} s")
    record(4, all(checks.values()) and dt < 600, detail)


def test_criterion_5_beam_and_wall(crit5_runs):
    ref, rb, rw = crit5_runs
    e0 = np.linalg.norm(tip(rb.initial.u) - ref)
    e1 = np.linalg.norm(tip(rb.bundle.u) - ref)
    l0, l1 = -rb.initial.F_P, -rb.bundle.F_P
    w0, w1 = -rw.initial.F_P, -rw.bundle.F_P
    reduction = 1 - e1 / e0
    ok = reduction >= 0.3 and l1 > l0 and w1 > w0
    record(5, ok, f"beam tip error reduction {100 * reduction:.1f}% (>= 30%), "
           f"l {l0:.4g} -> {l1:.4g}; shear wall l {w0:.5g} -> {w1:.5g}")


def test_criterion_6_tmop_suite():
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    T = rng.uniform(-2, 2, (4000, 2, 2))
    T = T[np.linalg.det(T) > 1e-3][:1000]

    def sm(a):
        return SmallMatrix([[a[:, 0, 0], a[:, 0, 1]], [a[:, 1, 0], a[:, 1, 1]]])

    th = rng.uniform(0, 2 * np.pi, len(T))
    R = np.moveaxis(np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]), (0, 1), (1, 2))
    c = rng.uniform(0.1, 10, len(T))[:, None, None]
    base = np.asarray(metric_mu2(sm(T)))
    inv = max(np.abs(metric_mu2(sm(R @ T)) - base).max(), np.abs(metric_mu2(sm(c * T)) - base).max())
    W = SmallMatrix([[1.0, 0.4], [0.1, 0.8]])
    nu0 = abs(metric_nu107(W * 2.5, W))
    g0 = np.abs(fmu_grad(make_cartesian(4, 4, 2), TargetSpec(), "mu2")).max()
    mesh = perturbed(make_cartesian(3, 3, 2), 0.1)
    fd_err = 0.0
    for spec, metric in ((TargetSpec(), "mu2"), (ORIENTED, "nu107")):
        g = fmu_grad(mesh, spec, metric)
        fd = central_fd(lambda x: fmu_value(mesh, spec, metric, x), mesh.x)
        fd_err = max(fd_err, np.abs(g - fd).max() / np.abs(fd).max())
    dt = time.perf_counter() - t
    ok = (len(T) == 1000 and base.min() >= -1e-12 and inv < 1e-10 and nu0 < 1e-12
          and g0 < 1e-10 and fd_err < 1e-6 and dt < 10)
    record(6, ok, f"mu2 min {base.min():.1e}, invariance {inv:.1e}, nu107(cW) {nu0:.1e}, "
           f"Cartesian grad {g0:.1e}, grad vs FD {fd_err:.1e}, {dt:.1f} s")


def test_criterion_7_filter_suite():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    mesh = make_cartesian(8, 8, 2)
    op = FilterOp(mesh, 0.005)
    n = mesh.n_nodes
    cst = np.concatenate([np.full(n, 2.0), np.full(n, -1.0)])
    e_const = np.abs(filter_apply(op, cst) - cst).max()
    w1, w2, g = rng.standard_normal((3, 2 * n))
    e_lin = np.abs(filter_apply(op, 2 * w1 - 3 * w2)
                   - 2 * filter_apply(op, w1) + 3 * filter_apply(op, w2)).max()
    lhs = filter_apply(op, w1) @ g
    e_adj = abs(lhs - w1 @ filter_adjoint_apply(op, g)) / abs(lhs)
    s = Space(mesh, 2, 2)
    e_int = np.abs(integrate(FieldVector(s, filter_apply(op, w1))) - integrate(FieldVector(s, w1))).max()
    dt = time.perf_counter() - t
    ok = e_const <= 1e-10 and e_lin <= 1e-10 and e_adj <= 1e-10 and e_int <= 1e-8 and dt < 10
    record(7, ok, f"constant {e_const:.1e}, linearity {e_lin:.1e}, adjoint {e_adj:.1e}, "
           f"integral {e_int:.1e}, {dt:.1f} s")


def test_criterion_8_validity(crit3_runs, crit4_runs, crit5_runs):
    histories = [r.history for r, *_ in crit3_runs.values()]
    histories += [r.history for r, _, _ in crit4_runs[0].values()]
    histories += [crit5_runs[1].history, crit5_runs[2].history]
    n_iter = sum(len(h) for h in histories)
    worst = min(e["min_det"] for h in histories for e in h)
    mesh = make_cartesian(4, 4, 2)
    big = np.zeros(mesh.x.size)
    centre = np.argmin(np.sum((mesh.points - 0.5) ** 2, axis=1))
    big[centre] = 6 * mesh.min_edge_length()
    wt, k = validity_line_search(mesh, big)
    ok = worst > 0 and k >= 1 and min_det_jacobian(apply_displacement(mesh, wt)) > 0
    record(8, ok, f"{n_iter} accepted iterates, smallest min det {worst:.2e} (> 0); "
           f"oversized step accepted after {k} halvings")


def test_criterion_9_patch_tests():
    mesh = perturbed(make_cartesian(4, 4, 2), 0.05)
    exact = lambda x, y: 1 + 2 * x + 3 * y  # noqa: E731
    prob = ProblemDef(kind="poisson", dirichlet=exact, dirichlet_attrs={1, 2, 3, 4}, penalty=1e5)
    u, _ = solve_forward(prob, Space(mesh, 2))
    e_patch = l2_error(u, lambda X: exact(X[:, 0], X[:, 1]))
    el = ProblemDef(kind="elasticity")
    space = Space(mesh, 2, 2)
    rot = interpolate(space, lambda X: np.stack([-X[:, 1], X[:, 0]]))
    scale = elastic_energy(el, interpolate(space, lambda X: np.stack([X[:, 0], 0 * X[:, 0]])))
    e_rigid = elastic_energy(el, rot) / scale
    ok = e_patch <= 1e-4 and e_rigid <= 1e-10
    record(9, ok, f"Poisson linear patch L2 {e_patch:.1e} (<= 1e-4), "
           f"rigid rotation energy ratio {e_rigid:.1e} (<= 1e-10)")
