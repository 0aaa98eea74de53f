# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; mirrors ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, cos, sin

cnp.import_array()


def align_rows(X, T):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1], i, j
    cdef bint shared = T.ndim == 1
    cdef const double[:, ::1] t = T.reshape(1, -1) if shared else T
    c_arr = np.zeros(n)
    d_arr = np.zeros(n)
    s_arr = np.zeros(n)
    cdef double[::1] c = c_arr, d = d_arr, s = s_arr
    cdef double xm, tm, sxx, sxt, dx
    cdef Py_ssize_t r
    for i in range(n):
        r = 0 if shared else i
        xm = 0.0
        tm = 0.0
        for j in range(p):
            xm += x[i, j]
            tm += t[r, j]
        xm /= p
        tm /= p
        sxx = 0.0
        sxt = 0.0
        for j in range(p):
            dx = x[i, j] - xm
            sxx += dx * dx
            sxt += dx * (t[r, j] - tm)
        s[i] = sxx
        if sxx > 0:
            c[i] = sxt / sxx
            d[i] = tm - c[i] * xm
    return c_arr, d_arr, s_arr


def l1_pairs(gt, x0, thetas, phis):
    cdef const double[::1] g = np.ascontiguousarray(gt, dtype=np.float64)
    cdef const double[::1] z = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[::1] th = np.ascontiguousarray(np.atleast_1d(thetas), dtype=np.float64)
    cdef const double[::1] ph = np.ascontiguousarray(np.atleast_1d(phis), dtype=np.float64)
    cdef Py_ssize_t m = th.shape[0], p = g.shape[0], k, j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double inv = 1.0 / sqrt(<double>p)
    cdef double cp, a, b, acc
    for k in range(m):
        cp = cos(ph[k])
        a = sin(ph[k]) * cos(th[k]) * inv
        b = sin(ph[k]) * sin(th[k])
        acc = 0.0
        for j in range(p):
            acc += fabs(cp * g[j] + b * z[j] + a)
        out[k] = acc
    return out_arr


def l1_grid(gt, x0, cos_t, sin_t, cos_p, sin_p):
    cdef const double[::1] g = np.ascontiguousarray(gt, dtype=np.float64)
    cdef const double[::1] z = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[::1] ct = np.ascontiguousarray(cos_t, dtype=np.float64)
    cdef const double[::1] st = np.ascontiguousarray(sin_t, dtype=np.float64)
    cdef const double[::1] cph = np.ascontiguousarray(cos_p, dtype=np.float64)
    cdef const double[::1] sph = np.ascontiguousarray(sin_p, dtype=np.float64)
    cdef Py_ssize_t nt = ct.shape[0], nphi = cph.shape[0], p = g.shape[0], i, l, j
    out_arr = np.empty((nt, nphi))
    cdef double[:, ::1] out = out_arr
    w_arr = np.empty(p)
    cdef double[::1] w = w_arr
    cdef double inv = 1.0 / sqrt(<double>p)
    cdef double a, b, acc
    with nogil:
        for i in range(nt):
            for j in range(p):
                w[j] = st[i] * z[j] + ct[i] * inv
            for l in range(nphi):
                a = cph[l]
                b = sph[l]
                acc = 0.0
                for j in range(p):
                    acc += fabs(a * g[j] + b * w[j])
                out[i, l] = acc
    return out_arr
