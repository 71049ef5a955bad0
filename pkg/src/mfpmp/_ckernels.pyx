# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the O(N^2) mean-field reductions and exact assignment.

Every reduction accumulates over the source particle ``j`` (then the inner
matrix index) in increasing order for each output particle, so results do
not depend on the OpenMP thread count. Built with ``-ffp-contract=off`` so
the arithmetic matches :mod:`mfpmp._pykernels` bit for bit.
"""

import numpy as np
from cython.parallel cimport prange
from libc.math cimport INFINITY


def covector_pair_average(const double[:, ::1] psi, const double[:, :, :, ::1] G, int threads=1):
    """out[i] = (1/N) sum_j psi[j] @ G[j, i]  (row-covector times matrix)."""
    cdef Py_ssize_t n = G.shape[0]
    cdef Py_ssize_t da = G.shape[2]
    cdef Py_ssize_t db = G.shape[3]
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    cdef double inv_n = 1.0 / n
    out = np.empty((n, db))
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, num_threads=threads, schedule="static"):
        for b in range(db):
            acc = 0.0
            for j in range(n):
                for a in range(da):
                    acc = acc + psi[j, a] * G[j, i, a, b]
            o[i, b] = acc * inv_n
    return out


def vector_pair_average(const double[:, :, :, ::1] G, const double[:, ::1] y, int threads=1):
    """out[i] = (1/N) sum_j G[i, j] @ y[j]  (matrix times column vector)."""
    cdef Py_ssize_t n = G.shape[0]
    cdef Py_ssize_t da = G.shape[2]
    cdef Py_ssize_t db = G.shape[3]
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    cdef double inv_n = 1.0 / n
    out = np.empty((n, da))
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, num_threads=threads, schedule="static"):
        for a in range(da):
            acc = 0.0
            for j in range(n):
                for b in range(db):
                    acc = acc + G[i, j, a, b] * y[j, b]
            o[i, a] = acc * inv_n
    return out


def pair_average(const double[:, :, ::1] g, int threads=1):
    """out[i] = (1/N) sum_j g[j, i]."""
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t d = g.shape[2]
    cdef Py_ssize_t i, j, b
    cdef double acc
    cdef double inv_n = 1.0 / n
    out = np.empty((n, d))
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, num_threads=threads, schedule="static"):
        for b in range(d):
            acc = 0.0
            for j in range(n):
                acc = acc + g[j, i, b]
            o[i, b] = acc * inv_n
    return out


def linear_assignment(const double[:, ::1] cost):
    """Minimum-cost perfect matching on a square cost matrix.

    Shortest augmenting path with dual potentials, O(n^3). Returns ``perm``
    with row ``i`` assigned to column ``perm[i]``.
    """
    cdef Py_ssize_t n = cost.shape[0]
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.intp)
    way_arr = np.zeros(n + 1, dtype=np.intp)
    minv_arr = np.empty(n + 1)
    used_arr = np.empty(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef Py_ssize_t[::1] p = p_arr
    cdef Py_ssize_t[::1] way = way_arr
    cdef double[::1] minv = minv_arr
    cdef unsigned char[::1] used = used_arr
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] = u[p[j]] + delta
                    v[j] = v[j] - delta
                else:
                    minv[j] = minv[j] - delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.intp)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm
