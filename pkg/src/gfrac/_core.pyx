# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  ``_pycore`` holds numpy equivalents with the same API."""

import numpy as np

from libc.math cimport fabs, sqrt


def resolvent_sum(const double complex[:, ::1] c, const double complex[:, ::1] q,
                  const double[::1] lam):
    """out[t, j] = Re sum_k c[t,k] / (q[t,k] + lam[j]) and the matching abs-sum."""
    cdef Py_ssize_t T = c.shape[0], K = c.shape[1], J = lam.shape[0]
    if q.shape[0] != T or q.shape[1] != K:
        raise ValueError("c and q must have the same shape")
    out = np.empty((T, J))
    mag = np.empty((T, J))
    cdef double[:, ::1] o = out
    cdef double[:, ::1] m = mag
    cdef Py_ssize_t t, j, k
    cdef double re, ab, cr, ci, dr, di, den, xr, xi
    with nogil:
        for t in range(T):
            for j in range(J):
                re = 0.0
                ab = 0.0
                for k in range(K):
                    cr = c[t, k].real
                    ci = c[t, k].imag
                    dr = q[t, k].real + lam[j]
                    di = q[t, k].imag
                    den = dr * dr + di * di
                    xr = (cr * dr + ci * di) / den
                    xi = (ci * dr - cr * di) / den
                    re += xr
                    ab += sqrt(xr * xr + xi * xi)
                o[t, j] = re
                m[t, j] = ab
    return out, mag


def l1_march(const double[::1] a, const double[::1] lam, const double[:, ::1] rhs, double[:, ::1] w,
             Py_ssize_t start):
    """Implicit L1 marching, in place on ``w`` for rows start+1..N.

    w[n] = (a[0] w[n-1] - sum_{j=1}^{n-1} a[n-j] (w[j]-w[j-1]) + rhs[n]) / (a[0] + lam)
    """
    cdef Py_ssize_t N = w.shape[0] - 1, B = w.shape[1]
    if rhs.shape[0] != N + 1 or rhs.shape[1] != B or lam.shape[0] != B:
        raise ValueError("shape mismatch in l1_march")
    if a.shape[0] < N:
        raise ValueError("need at least N weights")
    dw_arr = np.zeros((N + 1, B))
    cdef double[:, ::1] dw = dw_arr
    cdef Py_ssize_t n, j, b
    cdef double h, a0 = a[0]
    with nogil:
        for j in range(1, start + 1):
            for b in range(B):
                dw[j, b] = w[j, b] - w[j - 1, b]
        for n in range(start + 1, N + 1):
            for b in range(B):
                h = 0.0
                for j in range(1, n):
                    h += a[n - j] * dw[j, b]
                w[n, b] = (a0 * w[n - 1, b] - h + rhs[n, b]) / (a0 + lam[b])
                dw[n, b] = w[n, b] - w[n - 1, b]
    return np.asarray(w)
