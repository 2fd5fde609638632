"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--n 32] [--repeat 5]

Times Jacobi PCG on a Q2 Poisson stiffness matrix and the TMOP value and
gradient on an ``n x n`` Q2 mesh, for each backend, and checks that both
backends agree.
"""

import argparse
import timeit

import numpy as np

from radapt import kernels
from radapt.fespace import Space, assemble_mass, assemble_stiffness
from radapt.linalg import SparseMatrix, pcg_solve
from radapt.mesh import make_cartesian
from radapt.tmop import TargetSpec, fmu_grad, fmu_value, inclined_theta


def _cases(n):
    mesh = make_cartesian(n, n, 2)
    rng = np.random.default_rng(1)
    h = mesh.min_edge_length()
    moved = mesh.with_coords(mesh.x + np.where(mesh.constrained, 0.0,
                                               rng.uniform(-0.1 * h, 0.1 * h, mesh.x.size)))
    space = Space(mesh, 2)
    # stiffness + mass keeps the matrix SPD without boundary conditions
    K = assemble_stiffness(space)
    A = SparseMatrix.from_scipy(K.csr + assemble_mass(space).csr, symmetric=True)
    b = rng.standard_normal(space.ndofs)
    oriented = TargetSpec("ideal_shape_oriented", inclined_theta)
    return {
        "pcg": lambda: pcg_solve(A, b, rtol=1e-10),
        "tmop value mu2": lambda: fmu_value(moved, TargetSpec(), "mu2"),
        "tmop grad mu2": lambda: fmu_grad(moved, TargetSpec(), "mu2"),
        "tmop grad nu107": lambda: fmu_grad(moved, oriented, "nu107"),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = _cases(args.n)
    try:
        from radapt import _kernels  # noqa: F401
        backends = ("compiled", "python")
    except ImportError:
        print("compiled extension not built; timing the Python backend only")
        backends = ("python",)
    times, results = {}, {}
    for name in backends:
        kernels.use_backend(name)
        for key, fn in cases.items():
            results[name, key] = np.asarray(fn())
            times[name, key] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"{args.n}x{args.n} Q2 mesh, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup   max diff" if len(backends) == 2 else ""))
    for key in cases:
        row = f"{key:<18}" + "".join(f"{times[b, key] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = np.max(np.abs(results["compiled", key] - results["python", key]))
            scale = max(np.max(np.abs(results["python", key])), 1e-300)
            row += f"{times['python', key] / times['compiled', key]:>11.1f}x{diff / scale:>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
