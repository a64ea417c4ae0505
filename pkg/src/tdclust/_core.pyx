# Compiled kernels for the solver hot loop: squared Mahalanobis distances
# against every cluster mean and the per-observation argmin.  Semantics
# must match tdclust._core_py exactly (ties to the smallest cluster index).

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def distance_matrix(const double[:, ::1] points, const double[:, ::1] means,
                    const double[:, ::1] chol_lower):
    """All n*g squared Mahalanobis distances under the metric L L^T."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t g = means.shape[0]
    out_arr = np.empty((n, g), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] z = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t i, j, k, t
    cdef double acc, total
    with nogil:
        for i in range(n):
            for j in range(g):
                total = 0.0
                for k in range(d):
                    acc = points[i, k] - means[j, k]
                    for t in range(k):
                        acc -= chol_lower[k, t] * z[t]
                    acc /= chol_lower[k, k]
                    z[k] = acc
                    total += acc * acc
                out[i, j] = total
    return out_arr


def distance_argmin(const double[:, ::1] points, const double[:, ::1] means,
                    const double[:, ::1] chol_lower):
    """Per-observation nearest cluster and its squared distance."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t g = means.shape[0]
    dmin_arr = np.empty(n, dtype=np.float64)
    jmin_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] dmin = dmin_arr
    cdef cnp.int64_t[::1] jmin = jmin_arr
    cdef double[::1] z = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t i, j, k, t
    cdef double acc, total, best
    cdef Py_ssize_t best_j
    with nogil:
        for i in range(n):
            best = 0.0
            best_j = -1
            for j in range(g):
                total = 0.0
                for k in range(d):
                    acc = points[i, k] - means[j, k]
                    for t in range(k):
                        acc -= chol_lower[k, t] * z[t]
                    acc /= chol_lower[k, k]
                    z[k] = acc
                    total += acc * acc
                if best_j < 0 or total < best:
                    best = total
                    best_j = j
            dmin[i] = best
            jmin[i] = best_j
    return dmin_arr, jmin_arr
