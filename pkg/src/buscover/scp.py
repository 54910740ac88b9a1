"""Uni-cost set covering instances and reference solvers.

An instance is the sparse 0/1 matrix with one row per (street, interval)
cell and one column per trip; choosing a set of columns (trips) is feasible
when every row has at least one chosen column.  Columns that cover no row
are pruned at assembly and recorded; rows with no covering column are a hard
error because they mean the fleet can never satisfy the refresh requirement.

greedy_cover and brute_force_optimum are reference solvers: greedy for warm
starts and upper bounds, brute force as the exactness oracle on small
instances.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .city import BusTrip
from .errors import InfeasibleError
from .trajectory import CoverageSet, TimeGrid

BRUTE_FORCE_MAX_COLS = 25


@dataclass(frozen=True)
class Selection:
    """A chosen set of columns; the objective is its cardinality."""

    chosen: frozenset[int]

    @property
    def objective(self) -> int:
        return len(self.chosen)

    def as_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.chosen))


@dataclass(frozen=True)
class ScpInstance:
    """Sparse 0/1 covering matrix in compressed-row form.

    row_support holds, per row, the sorted distinct column indices with a 1.
    row_meta maps each row to its (street_id, interval_index) cell and
    col_meta maps each column to its trip id; both survive sub-instancing so
    results always translate back to the scenario.
    """

    row_support: tuple[tuple[int, ...], ...]
    n: int
    row_meta: tuple[tuple[int, int], ...]
    col_meta: tuple[int, ...]
    pruned_trips: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.row_meta) != len(self.row_support):
            raise ValueError("row_meta length must match row count")
        if len(self.col_meta) != self.n:
            raise ValueError("col_meta length must match column count")
        for i, support in enumerate(self.row_support):
            if any(b <= a for a, b in zip(support, support[1:])):
                raise ValueError(f"row {i}: support must be sorted and duplicate-free")
            if support and (support[0] < 0 or support[-1] >= self.n):
                raise ValueError(f"row {i}: column index out of range")

    @property
    def m(self) -> int:
        return len(self.row_support)

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.row_support)

    @cached_property
    def arrays(self) -> "kernels.InstanceArrays":
        return kernels.build_arrays(self.row_support, self.n)

    def sparse(self):
        """The matrix as a scipy CSR (rows x cols), built on demand."""
        import scipy.sparse as sp

        a = self.arrays
        data = np.ones(len(a.row_cols), dtype=np.float64)
        return sp.csr_matrix((data, a.row_cols, a.row_indptr), shape=(self.m, self.n))

    def subset_rows(self, rows: Sequence[int]) -> "ScpInstance":
        """A sub-instance over the given original rows; columns are never dropped."""
        rows = sorted(rows)
        return ScpInstance(tuple(self.row_support[r] for r in rows), self.n,
                           tuple(self.row_meta[r] for r in rows), self.col_meta,
                           self.pruned_trips)


class MatrixStats(NamedTuple):
    density: float
    avg_nnz_per_row: float
    m: int
    n: int
    nnz: int


def assemble_instance(coverage: CoverageSet, grid: TimeGrid,
                      trips: Sequence[BusTrip]) -> ScpInstance:
    """Build the covering instance: one row per (street, interval) cell.

    Trips covering zero cells are pruned from the columns and recorded.  Any
    cell with an empty coverage set makes the requirement unsatisfiable, so
    assembly fails listing every uncoverable (street_id, interval_index) pair.
    """
    if coverage.interval_count != grid.interval_count:
        raise ValueError("coverage and grid disagree on interval count")
    seen = set()
    for members in coverage.cells.values():
        seen |= members
    all_trip_ids = sorted(t.id for t in trips)
    retained = [tid for tid in all_trip_ids if tid in seen]
    pruned = tuple(tid for tid in all_trip_ids if tid not in seen)
    col_of = {tid: j for j, tid in enumerate(retained)}

    supports: list[tuple[int, ...]] = []
    meta: list[tuple[int, int]] = []
    uncoverable: list[tuple[int, int]] = []
    for sid in coverage.street_ids:
        for t in range(grid.interval_count):
            members = coverage.trips_on(sid, t)
            if not members:
                uncoverable.append((sid, t))
                continue
            supports.append(tuple(sorted(col_of[tid] for tid in members)))
            meta.append((sid, t))
    if uncoverable:
        raise InfeasibleError(
            f"{len(uncoverable)} (street, interval) cells have no covering trip: "
            f"{uncoverable[:20]}{'...' if len(uncoverable) > 20 else ''}",
            pairs=uncoverable)
    return ScpInstance(tuple(supports), len(retained), tuple(meta),
                       tuple(retained), pruned)


def is_feasible(instance: ScpInstance, selection: Selection) -> tuple[bool, list[int]]:
    """Check coverage; returns (feasible, sorted indices of violated rows)."""
    chosen = selection.as_sorted()
    if chosen and (chosen[0] < 0 or chosen[-1] >= instance.n):
        raise ValueError("selection contains column indices out of range")
    counts = kernels.cover_counts(instance.arrays, np.asarray(chosen, dtype=np.int32))
    violated = np.flatnonzero(counts == 0)
    return (len(violated) == 0, violated.tolist())


def greedy_cover(instance: ScpInstance) -> Selection:
    """Classical greedy cover: repeatedly take the column covering the most
    uncovered rows, ties broken by lowest column index."""
    ok, chosen = kernels.greedy_cover(instance.arrays)
    if not ok:
        raise InfeasibleError("instance has a row with no covering column")
    return Selection(frozenset(int(j) for j in chosen))


def brute_force_optimum(instance: ScpInstance) -> Selection:
    """Exhaustive minimum-cardinality cover; the oracle for small instances.

    Enumerates supports by increasing cardinality in lexicographic order, so
    ties resolve to the lexicographically smallest chosen set.  Refuses
    instances wider than BRUTE_FORCE_MAX_COLS columns.
    """
    if instance.n > BRUTE_FORCE_MAX_COLS:
        raise ValueError(
            f"brute force is limited to n <= {BRUTE_FORCE_MAX_COLS} columns, "
            f"got n = {instance.n}")
    if any(not support for support in instance.row_support):
        raise InfeasibleError("instance has an empty row; no cover exists")
    col_mask = [0] * instance.n
    for r, support in enumerate(instance.row_support):
        for j in support:
            col_mask[j] |= 1 << r
    full = (1 << instance.m) - 1
    for k in range(instance.n + 1):
        for combo in itertools.combinations(range(instance.n), k):
            acc = 0
            for j in combo:
                acc |= col_mask[j]
            if acc == full:
                return Selection(frozenset(combo))
    raise InfeasibleError("no cover exists")  # unreachable when rows are non-empty


def matrix_stats(instance: ScpInstance) -> MatrixStats:
    """Shape, sparsity, and fill statistics of the constraint matrix."""
    nnz = instance.nnz
    m, n = instance.m, instance.n
    density = nnz / (m * n) if m and n else 0.0
    avg = nnz / m if m else 0.0
    return MatrixStats(density, avg, m, n, nnz)


def random_instance(m: int, n: int, seed: int, min_row_nnz: int = 1,
                    max_row_nnz: int | None = None) -> ScpInstance:
    """A seeded random instance with no empty rows (test/benchmark helper)."""
    import random as _random

    rng = _random.Random(seed)
    hi = max_row_nnz if max_row_nnz is not None else max(min_row_nnz, n // 2)
    hi = min(hi, n)
    supports = tuple(tuple(sorted(rng.sample(range(n), rng.randint(min_row_nnz, hi))))
                     for _ in range(m))
    return ScpInstance(supports, n, tuple((i, 0) for i in range(m)),
                       tuple(range(n)))


# --- instance file I/O -------------------------------------------------------

def save_instance(instance: ScpInstance, path) -> None:
    """Write the sparse text format plus its metadata sidecar CSV.

    Matrix file: header line "m n nnz", then one line per row listing its
    sorted column indices.  Sidecar (<path>.meta.csv) maps rows to their
    (street, interval) cell and columns to trip ids, and records pruned trips.
    """
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{instance.m} {instance.n} {instance.nnz}\n")
        for support in instance.row_support:
            fh.write(" ".join(str(j) for j in support) + "\n")
    with open(path.with_name(path.name + ".meta.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "index", "street_id", "interval_index", "trip_id"])
        for i, (sid, t) in enumerate(instance.row_meta):
            writer.writerow(["row", i, sid, t, ""])
        for j, tid in enumerate(instance.col_meta):
            writer.writerow(["col", j, "", "", tid])
        for tid in instance.pruned_trips:
            writer.writerow(["pruned", "", "", "", tid])


def load_instance(path) -> ScpInstance:
    """Read an instance written by save_instance; the sidecar is optional."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: expected header 'm n nnz'")
        m, n, nnz = (int(v) for v in header)
        supports = []
        for _ in range(m):
            line = fh.readline()
            if line == "":
                raise ValueError(f"{path}: fewer rows than header declares")
            supports.append(tuple(int(v) for v in line.split()))
    row_meta: list[tuple[int, int]] = [(i, 0) for i in range(m)]
    col_meta: list[int] = list(range(n))
    pruned: list[int] = []
    sidecar = path.with_name(path.name + ".meta.csv")
    if sidecar.exists():
        with open(sidecar, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["kind"] == "row":
                    row_meta[int(row["index"])] = (int(row["street_id"]),
                                                   int(row["interval_index"]))
                elif row["kind"] == "col":
                    col_meta[int(row["index"])] = int(row["trip_id"])
                elif row["kind"] == "pruned":
                    pruned.append(int(row["trip_id"]))
    instance = ScpInstance(tuple(supports), n, tuple(row_meta), tuple(col_meta),
                           tuple(pruned))
    if instance.nnz != nnz:
        raise ValueError(f"{path}: header declares nnz={nnz} but rows sum to {instance.nnz}")
    return instance
