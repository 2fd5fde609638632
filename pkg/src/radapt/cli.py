"""Command-line driver.

    radapt run <config.ini>
    radapt study <config.ini> --levels N
    radapt gradcheck <config.ini>

Exit codes: 0 success, 1 invalid configuration or input, 2 solver failure
(including a failed gradient check).  ``RADAPT_THREADS`` (default 1) caps
the BLAS thread pool; all element loops are vectorized and single-threaded,
so results are deterministic.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import problems
from .config import ConfigError, load_config
from .dual import DomainError
from .fespace import h1_seminorm_error, l2_error
from .filters import FilterOp
from .linalg import SingularMatrixError, SolverError
from .mesh import InvalidMeshError
from .meshio import MeshFormatError, ensure_dir, read_native, write_native, write_vtk
from .optimizer import optimize
from .sensitivity import Objective, fd_gradient_check
from .tmop import TargetSpec, inclined_theta

log = logging.getLogger("radapt")

SUMMARY_COLUMNS = ("level", "h", "p", "p_u", "measure", "alpha", "init_l2", "init_h1",
                   "opt_l2", "opt_h1", "init_F_P", "init_F_mu", "F_P", "F_mu", "iterations",
                   "reason", "wall_time", "slope_init_l2", "slope_opt_l2")
HISTORY_COLUMNS = ("level", "iter", "F", "F_P", "F_mu", "grad_norm", "min_det", "halvings",
                   "time")

_PARAMS = {
    "circular2d": {"beta", "penalty"},
    "inclined2d": {"k", "penalty"},
    "beam": {"load", "plane"},
    "shearwall": {"load", "plane", "traction"},
    "custom": {"solution", "penalty"},
}

FAILURES = (SolverError, SingularMatrixError, DomainError, FloatingPointError)


def build_case(cfg, level=0):
    """Gallery case for *cfg* with the mesh refined ``level`` times."""
    extra = set(cfg.params) - _PARAMS[cfg.problem]
    if extra:
        raise ConfigError(f"[problem] key(s) {sorted(extra)} do not apply to {cfg.problem}")
    m, r = cfg.mesh, 2 ** level
    kw = dict(cfg.params)
    if cfg.problem == "custom":
        mesh = read_native(m["file"])
        if level:
            raise ConfigError("custom meshes cannot be refined by a study")
        try:
            case = problems.custom(mesh, kw.pop("solution", "sine"), cfg.p_u, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    elif cfg.problem == "shearwall":
        case = problems.shearwall(m["n"] * r, m["order"], cfg.p_u, m["type"], **kw)
    else:
        ctor = problems.GALLERY[cfg.problem]
        case = ctor(m["nx"] * r, m["ny"] * r, m["order"], cfg.p_u, m["type"], **kw)
    case.problem = dataclasses.replace(case.problem, solver=cfg.solver)
    return case


def build_objective(cfg, case):
    theta = inclined_theta if cfg.target == "ideal_shape_oriented" else None
    spec = TargetSpec(cfg.target, theta)
    fop = FilterOp(case.mesh, cfg.delta2, cfg.filter_geometry)
    return Objective(case.problem, case.mesh, case.order, cfg.measure, spec, cfg.metric,
                     cfg.alpha, fop)


def mesh_size(mesh):
    """Largest element edge length of the initial mesh."""
    pts = mesh.init_points
    v = mesh.vertex_elements
    return max(float(np.max(np.linalg.norm(pts[v[:, a]] - pts[v[:, b]], axis=1)))
               for a, b in mesh.basis.edges)


def _errors(case, u):
    if case.exact is None:
        return "", ""
    ex = 2 * max(case.mesh.order, case.order) + 5
    return l2_error(u, case.exact, ex), h1_seminorm_error(u, case.exact_grad, ex)


def run_level(cfg, level, out_dir, history_rows):
    """Optimize one case; writes meshes and fields into *out_dir*; returns a summary row."""
    case = build_case(cfg, level)
    obj = build_objective(cfg, case)
    t0 = time.perf_counter()
    res = optimize(obj, cfg.optimizer)
    wall = time.perf_counter() - t0
    init, final = res.initial, res.bundle
    for h in res.history:
        history_rows.append({"level": level, **h})
    e0, h0 = _errors(case, init.u)
    e1, h1 = _errors(case, final.u)
    log.info("level %d: %s after %d iterations, F %.6g -> %.6g (%.1f s)", level, res.reason,
             len(res.history) - 1, init.F, final.F, wall)
    ensure_dir(out_dir)
    write_native(init.mesh, os.path.join(out_dir, "mesh_init.rmesh"))
    write_native(final.mesh, os.path.join(out_dir, "mesh_opt.rmesh"))
    if cfg.vtk:
        write_vtk(init.mesh, os.path.join(out_dir, "mesh_init.vtk"), title="initial mesh")
        write_vtk(final.mesh, os.path.join(out_dir, "mesh_opt.vtk"), title="optimized mesh")
        write_vtk(init.mesh, os.path.join(out_dir, "u_init.vtk"), {"u": init.u},
                  title="solution on the initial mesh")
        write_vtk(final.mesh, os.path.join(out_dir, "u_opt.vtk"), {"u": final.u},
                  title="solution on the optimized mesh")
    return {"level": level, "h": mesh_size(case.mesh), "p": case.mesh.order, "p_u": case.order,
            "measure": cfg.measure, "alpha": cfg.alpha, "init_l2": e0, "init_h1": h0,
            "opt_l2": e1, "opt_h1": h1, "init_F_P": init.F_P, "init_F_mu": init.F_mu,
            "F_P": final.F_P, "F_mu": final.F_mu, "iterations": len(res.history) - 1,
            "reason": res.reason, "wall_time": wall, "slope_init_l2": "", "slope_opt_l2": ""}


def fit_slope(h, err):
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    if len(h) < 2:
        return None
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def cmd_run(cfg):
    ensure_dir(cfg.out_dir)
    hist = []
    row = run_level(cfg, 0, cfg.out_dir, hist)
    _write_csv(os.path.join(cfg.out_dir, "summary.csv"), SUMMARY_COLUMNS, [row])
    _write_csv(os.path.join(cfg.out_dir, "history.csv"), HISTORY_COLUMNS, hist)
    return 0


def cmd_study(cfg, levels):
    """Runs levels ``0..levels-1`` into ``<dir>/level<k>/``; slopes go on the last row."""
    if not 1 <= levels <= 4:
        raise ConfigError("--levels must be in 1..4")
    ensure_dir(cfg.out_dir)
    rows, hist = [], []
    for k in range(levels):
        rows.append(run_level(cfg, k, os.path.join(cfg.out_dir, f"level{k}"), hist))
    if levels > 1 and rows[0]["init_l2"] != "":
        hs = [r["h"] for r in rows]
        rows[-1]["slope_init_l2"] = fit_slope(hs, [r["init_l2"] for r in rows])
        rows[-1]["slope_opt_l2"] = fit_slope(hs, [r["opt_l2"] for r in rows])
        log.info("L2 slopes: initial %.3f, optimized %.3f", rows[-1]["slope_init_l2"],
                 rows[-1]["slope_opt_l2"])
    _write_csv(os.path.join(cfg.out_dir, "summary.csv"), SUMMARY_COLUMNS, rows)
    _write_csv(os.path.join(cfg.out_dir, "history.csv"), HISTORY_COLUMNS, hist)
    return 0


def cmd_gradcheck(cfg, n_check=24, seed=0, tol=1e-5):
    """Adjoint gradient vs Richardson central differences at a random feasible ``w``.

    Uses the direct solver: the PCG residual floor would otherwise show up
    as noise in the differences.
    """
    case = build_case(dataclasses.replace(cfg, solver="direct"))
    obj = build_objective(cfg, case)
    rng = np.random.default_rng(seed)
    h = obj.base.min_edge_length()
    w = rng.uniform(-0.05 * h, 0.05 * h, obj.size)
    bundle = obj.evaluate(w)
    free = np.flatnonzero(np.abs(bundle.dFdw) > 0)
    idx = np.sort(rng.choice(free, size=min(n_check, free.size), replace=False))
    rep = fd_gradient_check(obj.value, w, bundle.dFdw, steps=(1e-3 * h,), indices=idx,
                            richardson=True)
    err = rep["max_rel_error"]
    print(f"gradcheck {cfg.problem} {cfg.measure}: {len(idx)} components, "
          f"max relative error {err:.3e} (tolerance {tol:g})")
    return 0 if err < tol else 2


def _threads():
    raw = os.environ.get("RADAPT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RADAPT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("RADAPT_THREADS must be a positive integer")
    return n


def main(argv=None):
    ap = argparse.ArgumentParser(prog="radapt", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "study", "gradcheck"):
        p = sub.add_parser(name)
        p.add_argument("config")
        if name == "study":
            p.add_argument("--levels", type=int, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads()
        log.debug("threads: %d", threads)
        cfg = load_config(args.config)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "study":
            return cmd_study(cfg, args.levels or cfg.levels)
        return cmd_gradcheck(cfg)
    except (ConfigError, MeshFormatError, InvalidMeshError) as exc:
        print(f"radapt: error: {exc}", file=sys.stderr)
        return 1
    except FAILURES as exc:
        print(f"radapt: solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"radapt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
