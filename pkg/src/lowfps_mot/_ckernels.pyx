# cython: language_level=3
"""Compiled hot kernels: pairwise IoU and rectangular linear assignment."""
import numpy as np

from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc


def iou_matrix(a, b):
    cdef double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef double area_a, area_b, iw, ih, inter
    for i in range(n):
        area_a = (A[i, 2] - A[i, 0]) * (A[i, 3] - A[i, 1])
        for j in range(m):
            iw = min(A[i, 2], B[j, 2]) - max(A[i, 0], B[j, 0])
            if iw <= 0.0:
                continue
            ih = min(A[i, 3], B[j, 3]) - max(A[i, 1], B[j, 1])
            if ih <= 0.0:
                continue
            area_b = (B[j, 2] - B[j, 0]) * (B[j, 3] - B[j, 1])
            inter = iw * ih
            O[i, j] = inter / (area_a + area_b - inter)
    return out


def solve_lsa(cost):
    """Minimum-cost assignment of every row of ``cost`` (rows <= cols)."""
    cdef double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = C.shape[0], m = C.shape[1]
    if n > m:
        raise ValueError("solve_lsa needs rows <= cols")
    result = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return result
    cdef long long[::1] R = result
    cdef double *u = <double *> malloc((n + 1) * sizeof(double))
    cdef double *v = <double *> malloc((m + 1) * sizeof(double))
    cdef double *minv = <double *> malloc((m + 1) * sizeof(double))
    cdef Py_ssize_t *p = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t *way = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    cdef char *used = <char *> malloc((m + 1) * sizeof(char))
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    if not (u and v and minv and p and way and used):
        free(u); free(v); free(minv); free(p); free(way); free(used)
        raise MemoryError()
    try:
        for i in range(n + 1):
            u[i] = 0.0
        for j in range(m + 1):
            v[j] = 0.0
            p[j] = 0
            way[j] = 0
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(m + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, m + 1):
                    if not used[j]:
                        cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if j1 == 0 or minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(m + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
        for j in range(1, m + 1):
            if p[j] != 0:
                R[p[j] - 1] = j - 1
    finally:
        free(u); free(v); free(minv); free(p); free(way); free(used)
    return result
