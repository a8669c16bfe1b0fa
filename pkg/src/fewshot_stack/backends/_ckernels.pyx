# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Same contracts as ``numpy_ops``; loops are fused to avoid the temporary
arrays the numpy fallback allocates. Large matrix products (the conv GEMMs
and the high-dimensional pairwise distances) stay in BLAS in both backends,
so this module only covers gather and elementwise-heavy kernels.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, log, pow, sqrt

cnp.import_array()

NAME = "cython"

ctypedef fused floating:
    float
    double


def im2col3x3(x):
    # fused dispatch resolves on the array dtype (float32 / float64)
    return _im2col3x3(np.ascontiguousarray(x))


def _im2col3x3(floating[:, :, :, ::1] x not None):
    cdef Py_ssize_t b = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    out_arr = np.zeros((b * h * w, 9 * c), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t bi, i, j, ki, kj, ch, row, col0, si, sj
    with nogil:
        for bi in range(b):
            for i in range(h):
                for j in range(w):
                    row = (bi * h + i) * w + j
                    for ki in range(3):
                        si = i + ki - 1
                        if si < 0 or si >= h:
                            continue
                        for kj in range(3):
                            sj = j + kj - 1
                            if sj < 0 or sj >= w:
                                continue
                            col0 = (ki * 3 + kj) * c
                            for ch in range(c):
                                out[row, col0 + ch] = x[bi, si, sj, ch]
    return out_arr


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    _adam_update(p, g, m, v, t, lr, beta1, beta2, eps)


def _adam_update(floating[::1] p, floating[::1] g, floating[::1] m, floating[::1] v,
                 int t, double lr, double beta1, double beta2, double eps):
    # native-precision arithmetic: the update is memory-bound and float32
    # inputs vectorize twice as wide as promoted doubles
    cdef Py_ssize_t i, n = p.shape[0]
    cdef floating b1 = <floating>beta1
    cdef floating b2 = <floating>beta2
    cdef floating one_m_b1 = <floating>(1.0 - beta1)
    cdef floating one_m_b2 = <floating>(1.0 - beta2)
    cdef floating b1c = <floating>(1.0 - pow(beta1, t))
    cdef floating b2c = <floating>(1.0 - pow(beta2, t))
    cdef floating lrf = <floating>lr
    cdef floating epsf = <floating>eps
    cdef floating mi, vi
    with nogil:
        for i in range(n):
            mi = b1 * m[i] + one_m_b1 * g[i]
            vi = b2 * v[i] + one_m_b2 * (g[i] * g[i])
            m[i] = mi
            v[i] = vi
            p[i] = p[i] - lrf * (mi / b1c) / (<floating>sqrt(vi / b2c) + epsf)


# the one-shot high-dimensional distance matrix is BLAS-bound either way
from .numpy_ops import pairwise_sq_dists  # noqa: E402


def conditional_probs(double[:, ::1] d2 not None, double log_perp,
                      double tol=1e-5, int max_iter=64):
    cdef Py_ssize_t n = d2.shape[0]
    p_arr = np.zeros((n, n), dtype=np.float64)
    err_arr = np.zeros(n, dtype=np.float64)
    row_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] p = p_arr
    cdef double[::1] err = err_arr
    cdef double[::1] row = row_arr
    cdef Py_ssize_t i, j, it
    cdef double beta, blo, bhi, s, h, diff, dmin, wsum, e
    with nogil:
        for i in range(n):
            dmin = INFINITY
            for j in range(n):
                if j != i and d2[i, j] < dmin:
                    dmin = d2[i, j]
            beta = 1.0
            blo = 0.0
            bhi = INFINITY
            h = 0.0
            s = 1.0
            for it in range(max_iter):
                s = 0.0
                wsum = 0.0
                for j in range(n):
                    if j == i:
                        row[j] = 0.0
                        continue
                    e = exp(-(d2[i, j] - dmin) * beta)
                    row[j] = e
                    s += e
                    wsum += (d2[i, j] - dmin) * e
                # shifted-entropy identity: H = log s + beta * E[d - dmin]
                h = log(s) + beta * wsum / s
                diff = h - log_perp
                if fabs(diff) <= tol:
                    break
                if diff > 0.0:
                    blo = beta
                    beta = beta * 2.0 if bhi == INFINITY else (beta + bhi) * 0.5
                else:
                    bhi = beta
                    beta = beta * 0.5 if blo == 0.0 else (beta + blo) * 0.5
            err[i] = fabs(h - log_perp)
            for j in range(n):
                if j != i:
                    p[i, j] = row[j] / s
    return p_arr, err_arr


def tsne_grad(double[:, ::1] y not None, double[:, ::1] p not None):
    cdef Py_ssize_t n = y.shape[0]
    grad_arr = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, w, q, mult, sumw = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                w = 1.0 / (1.0 + dx * dx + dy * dy)
                sumw += 2.0 * w
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                w = 1.0 / (1.0 + dx * dx + dy * dy)
                q = w / sumw
                if q < 1e-12:
                    q = 1e-12
                mult = 4.0 * (p[i, j] - q) * w
                grad[i, 0] += mult * dx
                grad[i, 1] += mult * dy
    return grad_arr


def tsne_kl(double[:, ::1] y not None, double[:, ::1] p not None):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, w, q, pij, sumw = 0.0, kl = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                w = 1.0 / (1.0 + dx * dx + dy * dy)
                sumw += 2.0 * w
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                w = 1.0 / (1.0 + dx * dx + dy * dy)
                q = w / sumw
                if q < 1e-12:
                    q = 1e-12
                pij = p[i, j]
                if pij < 1e-12:
                    pij = 1e-12
                kl += p[i, j] * (log(pij) - log(q))
    return kl
