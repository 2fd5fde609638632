"""Small dense matrices, CSR sparse matrices and preconditioned CG."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import dual as ad
from . import kernels


class SingularMatrixError(ArithmeticError):
    pass


class SolverError(RuntimeError):
    """Iterative solve did not reach the requested tolerance."""

    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SmallMatrix:
    """Dense ``d x d`` matrix whose entries may be floats, arrays or duals.

    Entries that are arrays make the matrix a batch of matrices (one per
    array lane); all operations act lane-wise.
    """

    def __init__(self, entries):
        self.entries = [list(row) for row in entries]
        self.dim = len(self.entries)
        if any(len(row) != self.dim for row in self.entries):
            raise ValueError("SmallMatrix must be square")

    @classmethod
    def from_array(cls, arr):
        """Wrap a ``[..., d, d]`` array (or dual of such arrays)."""
        d = ad.primal(arr).shape[-1]
        return cls([[arr[..., a, b] for b in range(d)] for a in range(d)])

    @classmethod
    def identity(cls, d):
        return cls([[1.0 if a == b else 0.0 for b in range(d)] for a in range(d)])

    def to_array(self):
        rows = [ad.stack(row, axis=-1) for row in self.entries]
        return ad.stack(rows, axis=-2)

    def __getitem__(self, ab):
        a, b = ab
        return self.entries[a][b]

    def __repr__(self):
        return f"SmallMatrix({self.entries!r})"

    @property
    def T(self):
        d = self.dim
        return SmallMatrix([[self.entries[b][a] for b in range(d)] for a in range(d)])

    def __add__(self, other):
        d = self.dim
        return SmallMatrix([[self.entries[a][b] + other.entries[a][b] for b in range(d)]
                            for a in range(d)])

    def __sub__(self, other):
        d = self.dim
        return SmallMatrix([[self.entries[a][b] - other.entries[a][b] for b in range(d)]
                            for a in range(d)])

    def __mul__(self, s):
        d = self.dim
        return SmallMatrix([[self.entries[a][b] * s for b in range(d)] for a in range(d)])

    __rmul__ = __mul__

    def __matmul__(self, other):
        d = self.dim
        out = []
        for a in range(d):
            row = []
            for b in range(d):
                acc = self.entries[a][0] * other.entries[0][b]
                for k in range(1, d):
                    acc = acc + self.entries[a][k] * other.entries[k][b]
                row.append(acc)
            out.append(row)
        return SmallMatrix(out)

    def apply(self, v):
        """Matrix-vector product with a list of ``d`` components."""
        d = self.dim
        out = []
        for a in range(d):
            acc = self.entries[a][0] * v[0]
            for k in range(1, d):
                acc = acc + self.entries[a][k] * v[k]
            out.append(acc)
        return out

    def trace(self):
        acc = self.entries[0][0]
        for a in range(1, self.dim):
            acc = acc + self.entries[a][a]
        return acc

    def fro2(self):
        acc = 0.0
        for row in self.entries:
            for v in row:
                acc = acc + v * v
        return acc

    def fro(self):
        return ad.sqrt(self.fro2())

    def det(self):
        m = self.entries
        if self.dim == 2:
            return m[0][0] * m[1][1] - m[0][1] * m[1][0]
        if self.dim == 3:
            return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
        raise ValueError("only 2x2 and 3x3 matrices are supported")

    def adjugate(self):
        m = self.entries
        if self.dim == 2:
            return SmallMatrix([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]])
        cof = [[None] * 3 for _ in range(3)]
        for a in range(3):
            for b in range(3):
                r = [i for i in range(3) if i != a]
                c = [j for j in range(3) if j != b]
                minor = m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]
                cof[a][b] = minor if (a + b) % 2 == 0 else -minor
        # adjugate is the transposed cofactor matrix
        return SmallMatrix(cof).T

    def inv(self, det=None):
        if det is None:
            det = self.det()
        if np.any(np.abs(np.asarray(ad.primal(det))) == 0.0):
            raise SingularMatrixError("matrix is singular")
        adj = self.adjugate()
        d = self.dim
        return SmallMatrix([[adj.entries[a][b] / det for b in range(d)] for a in range(d)])


def small_det_inv_norm(M):
    """Return ``(det, inverse, Frobenius norm)`` of a :class:`SmallMatrix`."""
    det = M.det()
    return det, M.inv(det), M.fro()


@dataclass
class SparseMatrix:
    """Square-or-rectangular CSR matrix.

    Storage is the classic triple of row offsets, column indices and values;
    products delegate to ``scipy.sparse`` for speed.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple
    symmetric: bool = False
    _csr: sp.csr_matrix = field(default=None, repr=False, compare=False)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric=False):
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls.from_scipy(m, symmetric)

    @classmethod
    def from_scipy(cls, m, symmetric=False):
        m = sp.csr_matrix(m)
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                   m.data.astype(float), tuple(m.shape), symmetric, m)

    @property
    def csr(self):
        if self._csr is None:
            self._csr = sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)
        return self._csr

    @property
    def nnz(self):
        return len(self.data)

    def __matmul__(self, x):
        return self.csr @ x

    def matvec(self, x):
        return self.csr @ x

    def rmatvec(self, x):
        return self.csr.T @ x

    def diagonal(self):
        return self.csr.diagonal()

    def toarray(self):
        return self.csr.toarray()

    def asymmetry(self):
        """``max |K_ij - K_ji|`` relative to ``max |K|``."""
        d = abs(self.csr - self.csr.T)
        scale = np.max(np.abs(self.data)) if self.nnz else 1.0
        return (d.max() if d.nnz else 0.0) / scale


MAX_RESTARTS = 8


def pcg_solve(A, b, precond="jacobi", rtol=1e-10, maxit=None, x0=None, history=None):
    """Solve ``A x = b`` for SPD ``A`` with (Jacobi-)preconditioned CG.

    Raises :class:`SolverError` when ``||A x - b|| > rtol ||b||`` after
    ``maxit`` iterations (default ``4 n``).

    If *history* is a list, the iteration count and final relative residual
    are appended to it.
    """
    if not 0.0 < rtol < 1.0:
        raise ValueError("rtol must lie in (0, 1)")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"shape mismatch: A is {A.shape}, b has {n} rows")
    if maxit is None:
        maxit = 4 * n
    if precond == "jacobi":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("Jacobi preconditioner needs a positive diagonal")
        dinv = 1.0 / diag
    elif precond == "none":
        dinv = np.ones(n)
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        if history is not None:
            history.append((0, 0.0))
        return np.zeros(n)
    x, it, res = kernels.pcg(A.indptr, A.indices, A.data, b, dinv, x, rtol * bnorm, maxit)
    # the recurrence residual drifts from the true one; restart from the true residual
    true_res = np.linalg.norm(b - A @ x)
    for _ in range(MAX_RESTARTS):
        if true_res <= rtol * bnorm or it >= maxit:
            break
        x, it2, res = kernels.pcg(A.indptr, A.indices, A.data, b, dinv, x,
                                  rtol * bnorm, maxit - it)
        it += max(it2, 1)
        previous, true_res = true_res, np.linalg.norm(b - A @ x)
        if true_res >= previous:
            break
    if history is not None:
        history.append((it, true_res / bnorm))
    if true_res > rtol * bnorm:
        raise SolverError(f"PCG did not converge in {it} iterations: "
                          f"relative residual {true_res / bnorm:.3e}",
                          residual=true_res / bnorm, iterations=it)
    return x
