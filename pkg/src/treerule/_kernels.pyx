# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled row-set kernels over CSR boolean matrices.

Every matrix is passed as ``(indptr, indices)`` with ``indptr`` int64 and
``indices`` int32, column indices sorted and unique within each row.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t
from libc.stdlib cimport qsort

cnp.import_array()


cdef int _cmp_int32(const void *a, const void *b) noexcept nogil:
    cdef int32_t x = (<int32_t *> a)[0]
    cdef int32_t y = (<int32_t *> b)[0]
    return (x > y) - (x < y)


def hop(const int64_t[::1] v_indptr, const int32_t[::1] v_indices,
        const int64_t[::1] m_indptr, const int32_t[::1] m_indices,
        Py_ssize_t ncols):
    cdef Py_ssize_t nrows = v_indptr.shape[0] - 1
    cdef Py_ssize_t row, p, q, j, start, lo, hi, k
    cdef int32_t c
    cdef int64_t n = 0
    cdef int64_t cap = 0

    # Upper bound per row is min(ncols, sum of gathered row lengths).
    for row in range(nrows):
        q = 0
        for p in range(v_indptr[row], v_indptr[row + 1]):
            j = v_indices[p]
            q += m_indptr[j + 1] - m_indptr[j]
        cap += q if q < ncols else ncols

    out_indptr = np.zeros(nrows + 1, dtype=np.int64)
    out_indices = np.empty(cap, dtype=np.int32)
    cdef int64_t[::1] oi = out_indptr
    cdef int32_t[::1] ox = out_indices
    cdef int64_t[::1] stamp = np.zeros(ncols, dtype=np.int64)

    with nogil:
        for row in range(nrows):
            start = n
            lo = ncols
            hi = -1
            for p in range(v_indptr[row], v_indptr[row + 1]):
                j = v_indices[p]
                for q in range(m_indptr[j], m_indptr[j + 1]):
                    c = m_indices[q]
                    if stamp[c] != row + 1:
                        stamp[c] = row + 1
                        ox[n] = c
                        n += 1
                        if c < lo:
                            lo = c
                        if c > hi:
                            hi = c
            k = n - start
            if k > 1:
                # dense rows: walking the marked span is cheaper than sorting
                if k * 64 >= hi - lo + 1:
                    n = start
                    for c in range(lo, hi + 1):
                        if stamp[c] == row + 1:
                            ox[n] = c
                            n += 1
                else:
                    qsort(&ox[start], k, sizeof(int32_t), _cmp_int32)
            oi[row + 1] = n
    return out_indptr, out_indices[:n].copy()


def intersect(const int64_t[::1] a_indptr, const int32_t[::1] a_indices,
              const int64_t[::1] b_indptr, const int32_t[::1] b_indices):
    cdef Py_ssize_t nrows = a_indptr.shape[0] - 1
    cdef Py_ssize_t row, i, j, ie, je
    cdef int64_t n = 0
    out_indptr = np.zeros(nrows + 1, dtype=np.int64)
    out_indices = np.empty(min(a_indices.shape[0], b_indices.shape[0]), dtype=np.int32)
    cdef int64_t[::1] oi = out_indptr
    cdef int32_t[::1] ox = out_indices
    with nogil:
        for row in range(nrows):
            i = a_indptr[row]
            ie = a_indptr[row + 1]
            j = b_indptr[row]
            je = b_indptr[row + 1]
            while i < ie and j < je:
                if a_indices[i] < b_indices[j]:
                    i += 1
                elif a_indices[i] > b_indices[j]:
                    j += 1
                else:
                    ox[n] = a_indices[i]
                    n += 1
                    i += 1
                    j += 1
            oi[row + 1] = n
    return out_indptr, out_indices[:n].copy()


def difference(const int64_t[::1] a_indptr, const int32_t[::1] a_indices,
               const int64_t[::1] b_indptr, const int32_t[::1] b_indices):
    cdef Py_ssize_t nrows = a_indptr.shape[0] - 1
    cdef Py_ssize_t row, i, j, ie, je
    cdef int64_t n = 0
    out_indptr = np.zeros(nrows + 1, dtype=np.int64)
    out_indices = np.empty(a_indices.shape[0], dtype=np.int32)
    cdef int64_t[::1] oi = out_indptr
    cdef int32_t[::1] ox = out_indices
    with nogil:
        for row in range(nrows):
            i = a_indptr[row]
            ie = a_indptr[row + 1]
            j = b_indptr[row]
            je = b_indptr[row + 1]
            while i < ie:
                while j < je and b_indices[j] < a_indices[i]:
                    j += 1
                if j < je and b_indices[j] == a_indices[i]:
                    j += 1
                else:
                    ox[n] = a_indices[i]
                    n += 1
                i += 1
            oi[row + 1] = n
    return out_indptr, out_indices[:n].copy()


def mask_columns(const int64_t[::1] indptr, const int32_t[::1] indices,
                 const cnp.uint8_t[::1] keep):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t row, p
    cdef int64_t n = 0
    out_indptr = np.zeros(nrows + 1, dtype=np.int64)
    out_indices = np.empty(indices.shape[0], dtype=np.int32)
    cdef int64_t[::1] oi = out_indptr
    cdef int32_t[::1] ox = out_indices
    with nogil:
        for row in range(nrows):
            for p in range(indptr[row], indptr[row + 1]):
                if keep[indices[p]]:
                    ox[n] = indices[p]
                    n += 1
            oi[row + 1] = n
    return out_indptr, out_indices[:n].copy()


def intersect_count(const int64_t[::1] a_indptr, const int32_t[::1] a_indices,
                    const int64_t[::1] b_indptr, const int32_t[::1] b_indices):
    cdef Py_ssize_t nrows = a_indptr.shape[0] - 1
    cdef Py_ssize_t row, i, j, ie, je
    cdef int64_t n = 0
    with nogil:
        for row in range(nrows):
            i = a_indptr[row]
            ie = a_indptr[row + 1]
            j = b_indptr[row]
            je = b_indptr[row + 1]
            while i < ie and j < je:
                if a_indices[i] < b_indices[j]:
                    i += 1
                elif a_indices[i] > b_indices[j]:
                    j += 1
                else:
                    n += 1
                    i += 1
                    j += 1
    return n
