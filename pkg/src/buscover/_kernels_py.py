"""NumPy covering kernels: the pure-Python fallback backend.

Signatures mirror the compiled extension exactly; see kernels.py for the
contracts.  These lean on vectorized NumPy where the access pattern allows
it; dual_ascent is inherently sequential over rows and stays a Python loop.
"""
from __future__ import annotations

import math

import numpy as np


def greedy_cover(row_indptr, row_cols, col_indptr, col_rows, m, n):
    gains = np.diff(col_indptr).astype(np.int64)
    covered = np.zeros(m, dtype=bool)
    chosen: list[int] = []
    remaining = m
    while remaining > 0:
        j = int(np.argmax(gains))  # argmax takes the first maximum: lowest index wins ties
        if gains[j] <= 0:
            return False, np.asarray(chosen, dtype=np.int32)
        chosen.append(j)
        rows_j = col_rows[col_indptr[j]:col_indptr[j + 1]]
        new_rows = rows_j[~covered[rows_j]]
        covered[new_rows] = True
        remaining -= len(new_rows)
        if len(new_rows):
            affected = np.concatenate([row_cols[row_indptr[r]:row_indptr[r + 1]]
                                       for r in new_rows])
            np.subtract.at(gains, affected, 1)
    return True, np.asarray(chosen, dtype=np.int32)


def cover_counts(col_indptr, col_rows, chosen, m):
    counts = np.zeros(m, dtype=np.int64)
    if len(chosen) == 0:
        return counts
    parts = [col_rows[col_indptr[j]:col_indptr[j + 1]] for j in chosen]
    hits = np.concatenate(parts) if parts else np.empty(0, dtype=np.int32)
    if len(hits):
        counts += np.bincount(hits, minlength=m)
    return counts


def column_gains(row_indptr, row_cols, uncovered, avail, n):
    m = len(row_indptr) - 1
    row_of = np.repeat(np.arange(m, dtype=np.int32), np.diff(row_indptr))
    mask = uncovered.view(bool)[row_of]
    gains = np.bincount(row_cols[mask], minlength=n).astype(np.int64)
    gains[~avail.view(bool)] = 0
    return gains


def dual_ascent(row_indptr, row_cols, row_order, skip_row, col_unavail, n):
    slack = np.ones(n, dtype=np.float64)
    avail = ~col_unavail.view(bool)
    bound = 0.0
    for r in row_order:
        if skip_row[r]:
            continue
        cols = row_cols[row_indptr[r]:row_indptr[r + 1]]
        live = cols[avail[cols]]
        if len(live) == 0:
            return math.inf, slack
        u = slack[live].min()
        if u > 0.0:
            bound += u
            slack[live] -= u
    return bound, slack
