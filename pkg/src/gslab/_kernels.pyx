# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernel: per-node outer products of sparse rows."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def gram_triplets(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                  const double[:, ::1] data, const double[:, :, ::1] coef):
    cdef Py_ssize_t Q = indptr.shape[0] - 1
    cdef Py_ssize_t nc = data.shape[1]
    cdef Py_ssize_t q, i, j, a, b, s, e, pos = 0
    cdef Py_ssize_t total = 0
    cdef double acc, t
    for q in range(Q):
        total += (indptr[q + 1] - indptr[q]) * (indptr[q + 1] - indptr[q])
    rows_a = np.empty(total, dtype=np.int64)
    cols_a = np.empty(total, dtype=np.int64)
    vals_a = np.empty(total, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    with nogil:
        for q in range(Q):
            s = indptr[q]
            e = indptr[q + 1]
            for i in range(s, e):
                for j in range(s, e):
                    acc = 0.0
                    for a in range(nc):
                        t = 0.0
                        for b in range(nc):
                            t = t + coef[q, a, b] * data[j, b]
                        acc = acc + data[i, a] * t
                    rows[pos] = indices[i]
                    cols[pos] = indices[j]
                    vals[pos] = acc
                    pos += 1
    return rows_a, cols_a, vals_a
