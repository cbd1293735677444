# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: radial potential derivatives and collapsed table sums."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1

cnp.import_array()

BACKEND = "cython"

DEF MAXK = 64
DEF MAXDEG = 64

cdef double SERIES_MARGIN = 10.0
cdef int SERIES_TERMS = 120


cdef void _radials_one(double z, int kmax, double* E) noexcept nogil:
    cdef double ez = exp(-z)
    cdef double term, total
    cdef int n, k
    if z <= kmax + SERIES_MARGIN:
        term = 1.0 / (kmax + 1)
        total = term
        for n in range(1, SERIES_TERMS):
            term = term * z / (kmax + n + 1)
            total += term
            if term < 1e-18 * total:
                break
        E[kmax] = ez * total
        for k in range(kmax, 0, -1):
            E[k - 1] = (z * E[k] + ez) / k
    else:
        E[0] = -expm1(-z) / z
        for k in range(1, kmax + 1):
            E[k] = (k * E[k - 1] - ez) / z


def potential_radials(s, double a, int kmax):
    """h^(k)(s), k = 0..kmax, for h(s) = (1 - exp(-a s)) / s.  See the python fallback."""
    if kmax >= MAXK:
        raise ValueError("kmax too large for compiled core")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sv = np.ascontiguousarray(s, dtype=np.float64).ravel()
    cdef Py_ssize_t npt = sv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((kmax + 1, npt))
    cdef double E[MAXK]
    cdef double scale[MAXK]
    cdef Py_ssize_t p
    cdef int k
    cdef double ak = a
    for k in range(kmax + 1):
        scale[k] = ak if k % 2 == 0 else -ak
        ak *= a
    with nogil:
        for p in range(npt):
            _radials_one(a * sv[p], kmax, E)
            for k in range(kmax + 1):
                out[k, p] = E[k] * scale[k]
    return out


def table_sum(x1, x2, radial, comp, k, i, j, coef, int ncomp):
    """out[c, p] = sum of coef * radial[k, p] * x1^i * x2^j over the terms of component c."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x1, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xb = np.ascontiguousarray(x2, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] rad = np.ascontiguousarray(radial, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] tc = np.ascontiguousarray(comp, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] tk = np.ascontiguousarray(k, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ti = np.ascontiguousarray(i, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] tj = np.ascontiguousarray(j, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tv = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t npt = xa.shape[0]
    cdef Py_ssize_t nterm = tv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((ncomp, npt))
    cdef double px[MAXDEG]
    cdef double py[MAXDEG]
    cdef int deg = 0
    cdef Py_ssize_t p, n
    cdef int d
    if nterm == 0:
        return out
    deg = max(int(np.max(ti)), int(np.max(tj))) + 1
    if deg > MAXDEG:
        raise ValueError("polynomial degree too large for compiled core")
    with nogil:
        for p in range(npt):
            px[0] = 1.0
            py[0] = 1.0
            for d in range(1, deg):
                px[d] = px[d - 1] * xa[p]
                py[d] = py[d - 1] * xb[p]
            for n in range(nterm):
                out[tc[n], p] += tv[n] * rad[tk[n], p] * px[ti[n]] * py[tj[n]]
    return out
