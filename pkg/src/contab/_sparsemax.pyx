# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled row-wise sparsemax kernels (forward projection and its VJP).

The forward pass extracts only the support prefix via a max-heap instead of
fully sorting each row: the simplex-projection support condition fails
permanently once it first fails, so extraction stops after K pops, with K
the support size (small for sparse attention rows).
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef inline void _siftdown(double* heap, Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    # max-heap siftdown over heap[start..end)
    cdef Py_ssize_t root = start, child
    cdef double v = heap[root]
    while True:
        child = 2 * root + 1
        if child >= end:
            break
        if child + 1 < end and heap[child + 1] > heap[child]:
            child += 1
        if heap[child] <= v:
            break
        heap[root] = heap[child]
        root = child
    heap[root] = v


def sparsemax_forward(double[:, ::1] z):
    """Project each row of z onto the probability simplex.

    Returns (out, support) where support[i] is the number of nonzero
    entries in row i of the projection.
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t m = z.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    supp_arr = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef cnp.int64_t[::1] supp = supp_arr
    cdef double* heap = <double*> malloc(m * sizeof(double))
    if heap == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j, k, size
    cdef double cum, tau, top, v
    try:
        with nogil:
            for i in range(n):
                for j in range(m):
                    heap[j] = z[i, j]
                for j in range(m // 2 - 1, -1, -1):
                    _siftdown(heap, j, m)
                cum = 0.0
                tau = 0.0
                k = 0
                size = m
                while size > 0:
                    top = heap[0]
                    # support test for prefix length k+1:
                    # 1 + (k+1) * z_(k+1) > cumsum_(k+1)
                    if 1.0 + (k + 1) * top <= cum + top:
                        break
                    k += 1
                    cum += top
                    tau = (cum - 1.0) / k
                    size -= 1
                    heap[0] = heap[size]
                    if size > 1:
                        _siftdown(heap, 0, size)
                supp[i] = k
                for j in range(m):
                    v = z[i, j] - tau
                    out[i, j] = v if v > 0.0 else 0.0
    finally:
        free(heap)
    return out_arr, supp_arr


def sparsemax_backward(double[:, ::1] out, double[:, ::1] grad):
    """VJP of sparsemax: on the support S, g - mean_S(g); zero off support."""
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t m = out.shape[1]
    dz_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] dz = dz_arr
    cdef Py_ssize_t i, j, cnt
    cdef double s, v
    with nogil:
        for i in range(n):
            s = 0.0
            cnt = 0
            for j in range(m):
                if out[i, j] > 0.0:
                    s += grad[i, j]
                    cnt += 1
            if cnt > 0:
                v = s / cnt
                for j in range(m):
                    if out[i, j] > 0.0:
                        dz[i, j] = grad[i, j] - v
    return dz_arr
