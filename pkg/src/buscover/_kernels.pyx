# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled covering kernels. Same signatures as _kernels_py."""

import numpy as np

cimport numpy as cnp

INF = float("inf")


def greedy_cover(cnp.int64_t[::1] row_indptr, cnp.int32_t[::1] row_cols,
                 cnp.int64_t[::1] col_indptr, cnp.int32_t[::1] col_rows,
                 Py_ssize_t m, Py_ssize_t n):
    cdef cnp.int64_t[::1] gains = np.diff(np.asarray(col_indptr)).astype(np.int64)
    cdef cnp.uint8_t[::1] covered = np.zeros(m, dtype=np.uint8)
    chosen = []
    cdef Py_ssize_t remaining = m
    cdef Py_ssize_t j, best, r
    cdef cnp.int64_t best_gain
    cdef cnp.int64_t p, q
    while remaining > 0:
        best = 0
        best_gain = -1
        for j in range(n):
            if gains[j] > best_gain:
                best_gain = gains[j]
                best = j
        if best_gain <= 0:
            return False, np.asarray(chosen, dtype=np.int32)
        chosen.append(best)
        for p in range(col_indptr[best], col_indptr[best + 1]):
            r = col_rows[p]
            if not covered[r]:
                covered[r] = 1
                remaining -= 1
                for q in range(row_indptr[r], row_indptr[r + 1]):
                    gains[row_cols[q]] -= 1
    return True, np.asarray(chosen, dtype=np.int32)


def cover_counts(cnp.int64_t[::1] col_indptr, cnp.int32_t[::1] col_rows,
                 cnp.int32_t[::1] chosen, Py_ssize_t m):
    counts = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out = counts
    cdef Py_ssize_t k, j
    cdef cnp.int64_t p
    for k in range(chosen.shape[0]):
        j = chosen[k]
        for p in range(col_indptr[j], col_indptr[j + 1]):
            out[col_rows[p]] += 1
    return counts


def column_gains(cnp.int64_t[::1] row_indptr, cnp.int32_t[::1] row_cols,
                 cnp.uint8_t[::1] uncovered, cnp.uint8_t[::1] avail, Py_ssize_t n):
    gains = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = gains
    cdef Py_ssize_t m = uncovered.shape[0]
    cdef Py_ssize_t r, c
    cdef cnp.int64_t p
    for r in range(m):
        if uncovered[r]:
            for p in range(row_indptr[r], row_indptr[r + 1]):
                c = row_cols[p]
                if avail[c]:
                    out[c] += 1
    return gains


def dual_ascent(cnp.int64_t[::1] row_indptr, cnp.int32_t[::1] row_cols,
                cnp.int32_t[::1] row_order, cnp.uint8_t[::1] skip_row,
                cnp.uint8_t[::1] col_unavail, Py_ssize_t n):
    slack_arr = np.ones(n, dtype=np.float64)
    cdef cnp.float64_t[::1] slack = slack_arr
    cdef double bound = 0.0
    cdef double u
    cdef Py_ssize_t k, r, c
    cdef cnp.int64_t p
    cdef bint any_live
    for k in range(row_order.shape[0]):
        r = row_order[k]
        if skip_row[r]:
            continue
        u = 2.0  # slacks never exceed 1
        any_live = False
        for p in range(row_indptr[r], row_indptr[r + 1]):
            c = row_cols[p]
            if not col_unavail[c]:
                any_live = True
                if slack[c] < u:
                    u = slack[c]
        if not any_live:
            return INF, slack_arr
        if u > 0.0:
            bound += u
            for p in range(row_indptr[r], row_indptr[r + 1]):
                c = row_cols[p]
                if not col_unavail[c]:
                    slack[c] -= u
    return bound, slack_arr
