# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-column kernels: simplex projection and penalty proxes.

Mirrors the signatures of ``_kernels_np``; see that module for the math.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow
from libc.stdlib cimport malloc, free

BACKEND = "cython"


cdef void _sort_desc(double* w, Py_ssize_t m) noexcept nogil:
    # insertion sort; group sizes are small (tens at most)
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, m):
        key = w[i]
        j = i - 1
        while j >= 0 and w[j] < key:
            w[j + 1] = w[j]
            j -= 1
        w[j + 1] = key


def project_simplex_cols(v):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t q = vv.shape[0], n = vv.shape[1]
    out_arr = np.empty((q, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* w = <double*> malloc(q * sizeof(double))
    if w == NULL:
        raise MemoryError
    cdef Py_ssize_t i, j, k
    cdef double css, theta, val
    try:
        with nogil:
            for j in range(n):
                for i in range(q):
                    w[i] = vv[i, j]
                _sort_desc(w, q)
                css = 0.0
                theta = 0.0
                k = 0
                for i in range(q):
                    css += w[i]
                    if w[i] - (css - 1.0) / (i + 1) > 0.0:
                        theta = (css - 1.0) / (i + 1)
                        k = i
                for i in range(q):
                    val = vv[i, j] - theta
                    out[i, j] = val if val > 0.0 else 0.0
    finally:
        free(w)
    return out_arr


def prox_l1(v, double t):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t q = vv.shape[0], n = vv.shape[1]
    out_arr = np.empty((q, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double a
    with nogil:
        for j in range(n):
            for i in range(q):
                a = fabs(vv[i, j]) - t
                if a <= 0.0:
                    out[i, j] = 0.0
                else:
                    out[i, j] = a if vv[i, j] > 0.0 else -a
    return out_arr


def prox_group(v, starts, stops, double t):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef long[::1] sa = np.ascontiguousarray(starts, dtype=np.int64)
    cdef long[::1] sb = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t n = vv.shape[1], np_ = sa.shape[0]
    out_arr = np.empty((vv.shape[0], n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, i, j
    cdef double nrm, scale
    with nogil:
        for j in range(n):
            for p in range(np_):
                nrm = 0.0
                for i in range(sa[p], sb[p]):
                    nrm += vv[i, j] * vv[i, j]
                nrm = sqrt(nrm)
                scale = 1.0 - t / nrm if nrm > t else 0.0
                for i in range(sa[p], sb[p]):
                    out[i, j] = vv[i, j] * scale
    return out_arr


def prox_elitist(v, starts, stops, double t):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef long[::1] sa = np.ascontiguousarray(starts, dtype=np.int64)
    cdef long[::1] sb = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t n = vv.shape[1], np_ = sa.shape[0]
    cdef Py_ssize_t qmax = 0, p
    for p in range(np_):
        if sb[p] - sa[p] > qmax:
            qmax = sb[p] - sa[p]
    out_arr = np.empty((vv.shape[0], n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* w = <double*> malloc(qmax * sizeof(double))
    if w == NULL:
        raise MemoryError
    cdef Py_ssize_t i, j, m, k
    cdef double css, shrink, a
    try:
        with nogil:
            for j in range(n):
                for p in range(np_):
                    m = sb[p] - sa[p]
                    for i in range(m):
                        w[i] = fabs(vv[sa[p] + i, j])
                    _sort_desc(w, m)
                    css = 0.0
                    shrink = 0.0
                    for k in range(m):
                        css += w[k]
                        if w[k] * (1.0 + 2.0 * t * (k + 1)) > 2.0 * t * css:
                            shrink = 2.0 * t * css / (1.0 + 2.0 * t * (k + 1))
                    for i in range(sa[p], sb[p]):
                        a = fabs(vv[i, j]) - shrink
                        if a <= 0.0:
                            out[i, j] = 0.0
                        else:
                            out[i, j] = a if vv[i, j] > 0.0 else -a
    finally:
        free(w)
    return out_arr


def prox_frac(v, starts, stops, double t, double s,
              Py_ssize_t max_iter=100, double tol=1e-10):
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef long[::1] sa = np.ascontiguousarray(starts, dtype=np.int64)
    cdef long[::1] sb = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t n = vv.shape[1], np_ = sa.shape[0]
    out_arr = np.empty((vv.shape[0], n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, i, j, it
    cdef double rho, c, scale, max_resid = 0.0
    cdef double c_infl, hp_infl, lo, hi, x, g, gp, xn, h_int
    cdef bint convex = s >= 1.0
    if not convex:
        c_infl = pow(t * s * (1.0 - s), 1.0 / (2.0 - s))
    with nogil:
        for j in range(n):
            for p in range(np_):
                rho = 0.0
                for i in range(sa[p], sb[p]):
                    rho += vv[i, j] * vv[i, j]
                rho = sqrt(rho)
                c = 0.0
                if rho > 0.0 and t > 0.0:
                    if convex:
                        lo = 0.0
                        hi = rho
                        x = rho
                        if s == 1.0 and rho <= t:
                            x = -1.0  # stay at zero
                    else:
                        hp_infl = c_infl - rho + t * s * pow(c_infl, s - 1.0)
                        if hp_infl < 0.0:
                            lo = c_infl
                            hi = rho
                            x = rho
                        else:
                            x = -1.0
                    if x > 0.0:
                        for it in range(max_iter):
                            g = x - rho + t * s * pow(x, s - 1.0)
                            if fabs(g) <= tol * (1.0 if rho < 1.0 else rho):
                                break
                            if g > 0.0:
                                hi = x
                            else:
                                lo = x
                            gp = 1.0 + t * s * (s - 1.0) * pow(x, s - 2.0)
                            if gp > 0.0:
                                xn = x - g / gp
                            else:
                                xn = lo - 1.0
                            if xn <= lo or xn >= hi:
                                xn = 0.5 * (lo + hi)
                            x = xn
                        g = x - rho + t * s * pow(x, s - 1.0)
                        if fabs(g) > max_resid:
                            max_resid = fabs(g)
                        h_int = 0.5 * (x - rho) * (x - rho) + t * pow(x, s)
                        if h_int < 0.5 * rho * rho:
                            c = x
                elif t == 0.0:
                    c = rho
                scale = c / rho if rho > 0.0 else 0.0
                for i in range(sa[p], sb[p]):
                    out[i, j] = vv[i, j] * scale
    return out_arr, max_resid
