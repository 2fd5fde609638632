# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Jacobi-preconditioned CG and the TMOP element loop.

Signatures mirror :mod:`radapt._fallback` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def pcg(const long[::1] indptr, const long[::1] indices, const double[::1] data,
        const double[::1] b, const double[::1] dinv, x0, double atol, long maxit):
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, k
    cdef long it = 0
    cdef double rz, rz_new, pAp, alpha, beta, rnorm2, s
    x_arr = np.array(x0, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] r = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] Ap = np.empty(n)

    rnorm2 = 0.0
    rz = 0.0
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        r[i] = b[i] - s
        z[i] = dinv[i] * r[i]
        p[i] = z[i]
        rz += r[i] * z[i]
        rnorm2 += r[i] * r[i]
    while it < maxit and sqrt(rnorm2) > atol:
        pAp = 0.0
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * p[indices[k]]
            Ap[i] = s
            pAp += p[i] * s
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        rz_new = 0.0
        rnorm2 = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
            z[i] = dinv[i] * r[i]
            rz_new += r[i] * z[i]
            rnorm2 += r[i] * r[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        it += 1
    return x_arr, it, sqrt(rnorm2)


# ---- dual arithmetic on (value, tangent) pairs -------------------------------
cdef struct dual:
    double v
    double d

cdef inline dual dmk(double v, double d) noexcept nogil:
    cdef dual r
    r.v = v
    r.d = d
    return r

cdef inline dual dadd(dual a, dual b) noexcept nogil:
    return dmk(a.v + b.v, a.d + b.d)

cdef inline dual dsub(dual a, dual b) noexcept nogil:
    return dmk(a.v - b.v, a.d - b.d)

cdef inline dual dmul(dual a, dual b) noexcept nogil:
    return dmk(a.v * b.v, a.v * b.d + a.d * b.v)

cdef inline dual ddiv(dual a, dual b) noexcept nogil:
    cdef double q = a.v / b.v
    return dmk(q, (a.d - q * b.d) / b.v)

cdef inline dual dsqrt(dual a) noexcept nogil:
    cdef double s = sqrt(a.v)
    return dmk(s, 0.5 * a.d / s)

cdef inline dual det2(dual* m) noexcept nogil:
    # m row-major [a, b, c, d]
    return dsub(dmul(m[0], m[3]), dmul(m[1], m[2]))

cdef inline dual fro2(dual* m) noexcept nogil:
    return dadd(dadd(dmul(m[0], m[0]), dmul(m[1], m[1])),
                dadd(dmul(m[2], m[2]), dmul(m[3], m[3])))


cdef inline int metric_eval(int metric, dual* A, dual* W, dual* out) noexcept nogil:
    """Weighted metric det(W) * mu; returns 1 on a non-positive determinant."""
    cdef dual detA = det2(A)
    cdef dual detW = det2(W)
    cdef dual Winv[4]
    cdef dual T[4]
    cdef dual tau, nA, nW, ratio, diff, acc, mu
    cdef int k
    if detA.v <= 0.0:
        return 1
    if metric == 0:
        Winv[0] = ddiv(W[3], detW)
        Winv[1] = ddiv(dmk(-W[1].v, -W[1].d), detW)
        Winv[2] = ddiv(dmk(-W[2].v, -W[2].d), detW)
        Winv[3] = ddiv(W[0], detW)
        T[0] = dadd(dmul(A[0], Winv[0]), dmul(A[1], Winv[2]))
        T[1] = dadd(dmul(A[0], Winv[1]), dmul(A[1], Winv[3]))
        T[2] = dadd(dmul(A[2], Winv[0]), dmul(A[3], Winv[2]))
        T[3] = dadd(dmul(A[2], Winv[1]), dmul(A[3], Winv[3]))
        tau = det2(T)
        if tau.v <= 0.0:
            return 1
        mu = dsub(ddiv(fro2(T), dmul(dmk(2.0, 0.0), tau)), dmk(1.0, 0.0))
    else:
        nA = dsqrt(fro2(A))
        nW = dsqrt(fro2(W))
        ratio = ddiv(nA, nW)
        acc = dmk(0.0, 0.0)
        for k in range(4):
            diff = dsub(A[k], dmul(ratio, W[k]))
            acc = dadd(acc, dmul(diff, diff))
        mu = ddiv(dmul(dmk(0.5, 0.0), acc), detA)
    out[0] = dmul(detW, mu)
    return 0


def tmop_eval(const double[:, :, ::1] xe, const double[:, ::1] phi,
              const double[:, :, ::1] dphi, const double[::1] wq,
              const double[:, :, :, ::1] W, dWdX, int metric, bint want_grad):
    """Per-element TMOP integrals and (optionally) their coordinate gradients.

    Returns ``(values (E,), grad (E, Np, 2) or None, ok)``; ``ok`` is False
    when some quadrature point has a non-positive determinant.
    """
    cdef Py_ssize_t E = xe.shape[0], Np = xe.shape[1], nq = wq.shape[0]
    cdef Py_ssize_t e, q, i, a, b, k
    cdef bint has_dW = dWdX is not None
    cdef const double[:, :, :, :, ::1] dW
    if has_dW:
        dW = dWdX
    vals_arr = np.zeros(E)
    cdef double[::1] vals = vals_arr
    grad_arr = np.zeros((E, Np, 2)) if want_grad else None
    cdef double[:, :, ::1] grad
    if want_grad:
        grad = grad_arr
    cdef dual Ad[4]
    cdef dual Wd[4]
    cdef dual out
    cdef double A0[4]
    cdef int bad = 0
    with nogil:
        for e in range(E):
            for q in range(nq):
                for k in range(4):
                    A0[k] = 0.0
                for i in range(Np):
                    for a in range(2):
                        for b in range(2):
                            A0[2 * a + b] += xe[e, i, a] * dphi[q, i, b]
                for k in range(4):
                    Ad[k] = dmk(A0[k], 0.0)
                    Wd[k] = dmk(W[e, q, k // 2, k % 2], 0.0)
                if metric_eval(metric, Ad, Wd, &out):
                    bad = 1
                    break
                vals[e] += wq[q] * out.v
                if not want_grad:
                    continue
                for i in range(Np):
                    for a in range(2):
                        for k in range(4):
                            Ad[k].d = 0.0
                        for b in range(2):
                            Ad[2 * a + b].d = dphi[q, i, b]
                        for k in range(4):
                            if has_dW:
                                Wd[k].d = dW[e, q, k // 2, k % 2, a] * phi[q, i]
                            else:
                                Wd[k].d = 0.0
                        metric_eval(metric, Ad, Wd, &out)
                        grad[e, i, a] += wq[q] * out.d
            if bad:
                break
    return vals_arr, grad_arr, not bad
