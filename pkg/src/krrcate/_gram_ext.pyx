# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gram kernels; same contract as ``krrcate._gram_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs

cnp.import_array()


cdef inline double _horner(const double[::1] coefs, double x) noexcept nogil:
    cdef Py_ssize_t k
    cdef double out = coefs[0]
    for k in range(1, coefs.shape[0]):
        out = out * x + coefs[k]
    return out


cdef inline double _dist(const double[:, ::1] X1, const double[:, ::1] X2,
                         Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t c
    cdef double diff, acc = 0.0
    for c in range(X1.shape[1]):
        diff = X1[i, c] - X2[j, c]
        acc += diff * diff
    return sqrt(acc)


def matern_gram(const double[:, ::1] X1, const double[:, ::1] X2,
                double nu, double length_scale, bint symmetric):
    cdef Py_ssize_t n1 = X1.shape[0], n2 = X2.shape[0], i, j, j0
    cdef double scale = sqrt(2.0 * nu) / length_scale
    cdef bint five_halves = nu != 1.5
    cdef double u, v
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] G = out
    with nogil:
        for i in range(n1):
            j0 = i if symmetric else 0
            for j in range(j0, n2):
                u = _dist(X1, X2, i, j) * scale
                if five_halves:
                    v = (1.0 + u + u * u / 3.0) * exp(-u)
                else:
                    v = (1.0 + u) * exp(-u)
                G[i, j] = v
                if symmetric:
                    G[j, i] = v
    return out


def rbf_gram(const double[:, ::1] X1, const double[:, ::1] X2,
             double length_scale, bint symmetric):
    cdef Py_ssize_t n1 = X1.shape[0], n2 = X2.shape[0], i, j, j0
    cdef double denom = 2.0 * length_scale * length_scale
    cdef double r, v
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] G = out
    with nogil:
        for i in range(n1):
            j0 = i if symmetric else 0
            for j in range(j0, n2):
                r = _dist(X1, X2, i, j)
                v = exp(-(r * r) / denom)
                G[i, j] = v
                if symmetric:
                    G[j, i] = v
    return out


def sobolev_gram(const double[:, ::1] X1, const double[:, ::1] X2,
                 low_coefs, const double[::1] high_coefs, bint symmetric):
    cdef Py_ssize_t n1 = X1.shape[0], n2 = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t m = len(low_coefs), i, j, j0, c, k
    cdef double[:, :, ::1] P1 = np.empty((n1, d, m))
    cdef double[:, :, ::1] P2 = np.empty((n2, d, m))
    cdef double acc, v
    cdef const double[::1] coefs
    # basis values B_k(s)/k! per point, coordinate and order
    for k in range(m):
        coefs = np.ascontiguousarray(low_coefs[k], dtype=np.float64)
        for i in range(n1):
            for c in range(d):
                P1[i, c, k] = _horner(coefs, X1[i, c])
        for j in range(n2):
            for c in range(d):
                P2[j, c, k] = _horner(coefs, X2[j, c])
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] G = out
    with nogil:
        for i in range(n1):
            j0 = i if symmetric else 0
            for j in range(j0, n2):
                v = 1.0
                for c in range(d):
                    acc = 1.0
                    for k in range(m):
                        acc = acc + P1[i, c, k] * P2[j, c, k]
                    acc = acc + _horner(high_coefs, fabs(X1[i, c] - X2[j, c]))
                    v = v * acc
                G[i, j] = v
                if symmetric:
                    G[j, i] = v
    return out
