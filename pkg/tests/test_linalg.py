import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from radapt import kernels
from radapt.dual import Dual
from radapt.fespace import Space, assemble_stiffness
from radapt.linalg import (SingularMatrixError, SmallMatrix, SolverError, SparseMatrix, pcg_solve,
                           small_det_inv_norm)
from radapt.mesh import make_cartesian
from radapt.physics import assemble
from radapt.problems import SineSolution, poisson_problem


def test_det_tangent_from_seed():
    M = SmallMatrix([[Dual(1.0, 1.0), 2.0], [3.0, 4.0]])
    det = M.det()
    assert (det.primal, det.tangent) == (-2.0, 4.0)


def test_identity():
    for d in (2, 3):
        det, inv, fro = small_det_inv_norm(SmallMatrix.identity(d))
        assert det == 1.0
        assert np.allclose(inv.to_array(), np.eye(d))
        assert fro == pytest.approx(np.sqrt(d))


def test_diag_example():
    det, _, fro = small_det_inv_norm(SmallMatrix([[2.0, 0.0], [0.0, 0.5]]))
    assert det == 1.0
    assert fro == pytest.approx(np.sqrt(4.25))


def test_singular_inverse():
    with pytest.raises(SingularMatrixError):
        SmallMatrix([[1.0, 2.0], [2.0, 4.0]]).inv()


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 3), st.integers(0, 10 ** 6))
def test_inverse_consistency(d, seed):
    A = np.random.default_rng(seed).standard_normal((d, d))
    if abs(np.linalg.det(A)) < 1e-3:
        return
    M = SmallMatrix.from_array(A)
    assert np.allclose((M @ M.inv()).to_array(), np.eye(d), atol=1e-12 / min(1, abs(M.det())))
    assert M.det() == pytest.approx(np.linalg.det(A), rel=1e-12, abs=1e-14)


def test_batched_entries():
    A = np.random.default_rng(0).standard_normal((5, 2, 2)) + 3 * np.eye(2)
    M = SmallMatrix.from_array(A)
    assert np.allclose(M.det(), np.linalg.det(A))
    assert np.allclose(M.inv().to_array(), np.linalg.inv(A))


def test_pcg_identity_one_iteration():
    b = np.random.default_rng(1).standard_normal(20)
    hist = []
    x = pcg_solve(SparseMatrix.from_scipy(sp.identity(20, format="csr")), b, history=hist)
    assert np.allclose(x, b)
    assert hist[-1][0] <= 1


def test_pcg_diagonal():
    n = 30
    A = SparseMatrix.from_scipy(sp.diags(np.arange(1.0, n + 1)).tocsr())
    x = pcg_solve(A, np.ones(n), precond="none")
    assert np.allclose(x, 1.0 / np.arange(1, n + 1), rtol=1e-9)


def test_pcg_poisson_residual():
    mesh = make_cartesian(4, 4, 1)
    sys_ = assemble(poisson_problem(SineSolution()), Space(mesh, 1))
    b = np.random.default_rng(2).standard_normal(sys_.K.shape[0])
    x = pcg_solve(sys_.K, b, rtol=1e-10)
    assert np.linalg.norm(sys_.K @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_pcg_nonconvergence_reports_residual():
    mesh = make_cartesian(8, 8, 2)
    K = assemble(poisson_problem(SineSolution()), Space(mesh, 2)).K
    with pytest.raises(SolverError) as info:
        pcg_solve(K, np.ones(K.shape[0]), maxit=3)
    assert info.value.residual > 0


def test_pcg_a_norm_monotone():
    rng = np.random.default_rng(3)
    Q = rng.standard_normal((12, 12))
    A = Q @ Q.T + 12 * np.eye(12)
    b = rng.standard_normal(12)
    xs = np.linalg.solve(A, b)
    S = SparseMatrix.from_scipy(sp.csr_matrix(A), symmetric=True)
    errs = []
    for it in range(1, 12):
        x = _partial(S, b, it)
        errs.append(np.sqrt((x - xs) @ A @ (x - xs)))
    assert all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(errs, errs[1:]))


def _partial(S, b, it):
    # plain CG iterate after `it` steps, via the kernel directly
    x, _, _ = kernels.pcg(S.csr.indptr.astype(np.int64), S.csr.indices.astype(np.int64),
                          S.csr.data, b, np.ones(len(b)), np.zeros(len(b)), 0.0, it)
    return np.asarray(x)


def test_sparse_symmetry_of_assembly():
    K = assemble_stiffness(Space(make_cartesian(3, 3, 2), 2))
    assert K.asymmetry() <= 1e-12 * np.abs(K.csr.data).max()


def test_pcg_rejects_bad_args():
    A = SparseMatrix.from_scipy(sp.identity(3, format="csr"))
    with pytest.raises(ValueError):
        pcg_solve(A, np.ones(3), rtol=0.0)
    with pytest.raises(ValueError):
        pcg_solve(A, np.ones(4))
