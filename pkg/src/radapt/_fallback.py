"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
import scipy.sparse as sp


def pcg(indptr, indices, data, b, dinv, x0, atol, maxit):
    n = b.shape[0]
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    rnorm = np.sqrt(r @ r)
    it = 0
    while it < maxit and rnorm > atol:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        rnorm = np.sqrt(r @ r)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it, rnorm


def tmop_eval(xe, phi, dphi, wq, W, dWdX, metric, want_grad):
    """Dual-number evaluation vectorized over elements, quadrature points and seeds."""
    from . import dual as ad
    from .linalg import SmallMatrix
    from .tmop import weighted_metric

    E, Np, _ = xe.shape
    A0 = np.einsum("eia,qib->eqab", xe, dphi)
    Wm = SmallMatrix.from_array(W)
    try:
        vals = np.einsum("q,eq->e", wq, weighted_metric(metric, SmallMatrix.from_array(A0), Wm))
    except ad.DomainError:
        return np.zeros(E), None, False
    if not want_grad:
        return vals, None, True
    # one seed per local coordinate (i, a): tangent axes (Np, 2, E, nq, 2, 2)
    nq = wq.shape[0]
    dA = np.zeros((Np, 2, 1, nq, 2, 2))
    for a in range(2):
        dA[:, a, 0, :, a, :] = np.transpose(dphi, (1, 0, 2))
    A = SmallMatrix.from_array(ad.Dual(A0, dA))
    if dWdX is None:
        Wd = Wm
    else:
        # d W / d x_(i,a) = dW/dX_a * phi_i
        dW = np.einsum("eqbca,qi->iaeqbc", dWdX, phi)
        Wd = SmallMatrix.from_array(ad.Dual(W, dW))
    mu = weighted_metric(metric, A, Wd)
    g = np.einsum("q,iaeq->eia", wq, np.broadcast_to(mu.tangent, (Np, 2, E, nq)))
    return vals, g, True
