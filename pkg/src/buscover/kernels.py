"""Covering kernels with a compiled core and a NumPy fallback.

The branch-and-bound engine spends nearly all of its time in four primitives
over the sparse 0/1 matrix: greedy covering, per-row cover counts for a
chosen column set, per-column gain counts over uncovered rows, and the
greedy dual-ascent lower bound.  A Cython extension (buscover._kernels)
implements them as tight loops; this module selects it at import time and
falls back to the NumPy implementations in buscover._kernels_py when the
extension is unavailable.

Set BUSCOVER_KERNELS=python (or cython) to force a backend; use
set_backend() for programmatic control.  benchmarks/bench_kernels.py
compares the two.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

try:  # compiled extension is optional; the build degrades gracefully
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def _initial_backend() -> str:
    forced = os.environ.get("BUSCOVER_KERNELS", "auto").lower()
    if forced in _BACKENDS:
        return forced
    if forced not in ("", "auto"):
        raise ImportError(f"BUSCOVER_KERNELS={forced!r} requested but not available "
                          f"(have: {sorted(_BACKENDS)})")
    return "cython" if "cython" in _BACKENDS else "python"


_active_name = _initial_backend()
_active = _BACKENDS[_active_name]


def backend_name() -> str:
    return _active_name


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    global _active, _active_name
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have: {sorted(_BACKENDS)})")
    _active_name = name
    _active = _BACKENDS[name]


@dataclass(frozen=True)
class InstanceArrays:
    """CSR + CSC views of an instance, shared by all kernels.

    row_order lists row indices sorted by ascending (support size, index);
    dual ascent processes rows in this order so scarce rows claim column
    slack first.
    """

    m: int
    n: int
    row_indptr: np.ndarray  # int64[m+1]
    row_cols: np.ndarray    # int32[nnz]
    col_indptr: np.ndarray  # int64[n+1]
    col_rows: np.ndarray    # int32[nnz]
    row_sizes: np.ndarray   # int64[m]
    row_order: np.ndarray   # int32[m]


def build_arrays(row_support, n: int) -> InstanceArrays:
    m = len(row_support)
    sizes = np.fromiter((len(r) for r in row_support), dtype=np.int64, count=m)
    row_indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(sizes, out=row_indptr[1:])
    nnz = int(row_indptr[-1])
    row_cols = np.empty(nnz, dtype=np.int32)
    pos = 0
    for support in row_support:
        row_cols[pos:pos + len(support)] = support
        pos += len(support)
    # transpose to CSC: a stable argsort of the column ids groups entries per
    # column in row order, matching the cumulative col_indptr offsets exactly
    col_sizes = np.bincount(row_cols, minlength=n) if nnz else np.zeros(n, dtype=np.int64)
    col_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(col_sizes, out=col_indptr[1:])
    row_of = np.repeat(np.arange(m, dtype=np.int32), sizes)
    col_rows = row_of[np.argsort(row_cols, kind="stable")]
    row_order = np.lexsort((np.arange(m), sizes)).astype(np.int32)
    return InstanceArrays(m, n, row_indptr, row_cols, col_indptr, col_rows,
                          sizes, row_order)


def greedy_cover(arrays: InstanceArrays) -> tuple[bool, np.ndarray]:
    """Full greedy cover; returns (covered_everything, chosen column indices)."""
    ok, chosen = _active.greedy_cover(arrays.row_indptr, arrays.row_cols,
                                      arrays.col_indptr, arrays.col_rows,
                                      arrays.m, arrays.n)
    return bool(ok), chosen


def cover_counts(arrays: InstanceArrays, chosen: np.ndarray) -> np.ndarray:
    """Per-row count of chosen columns covering it."""
    chosen = np.ascontiguousarray(chosen, dtype=np.int32)
    return _active.cover_counts(arrays.col_indptr, arrays.col_rows, chosen, arrays.m)


def column_gains(arrays: InstanceArrays, uncovered: np.ndarray,
                 avail: np.ndarray) -> np.ndarray:
    """Per-column count of uncovered rows it would cover; 0 for unavailable columns."""
    return _active.column_gains(arrays.row_indptr, arrays.row_cols,
                                np.ascontiguousarray(uncovered, dtype=np.uint8),
                                np.ascontiguousarray(avail, dtype=np.uint8), arrays.n)


def dual_ascent(arrays: InstanceArrays, skip_row: np.ndarray,
                col_unavail: np.ndarray) -> tuple[float, np.ndarray]:
    """Greedy dual-feasible bound over the non-skipped rows.

    Returns (bound, residual column slack).  The bound is a valid lower bound
    on any fractional cover of the non-skipped rows by available columns;
    it is +inf when some row has no available column at all.
    """
    return _active.dual_ascent(arrays.row_indptr, arrays.row_cols, arrays.row_order,
                               np.ascontiguousarray(skip_row, dtype=np.uint8),
                               np.ascontiguousarray(col_unavail, dtype=np.uint8),
                               arrays.n)
