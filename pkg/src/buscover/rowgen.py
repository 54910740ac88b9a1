"""Row-generation pre-training.

Instead of solving the full covering problem, grow a sub-problem from zero
rows: solve it to optimality, find the original rows its solution violates,
add the scarcest (fewest-nonzero) violated rows, and repeat.  Because rows
are only ever deleted relative to the full problem, every sub-optimum is a
lower bound on the full optimum, and a sub-optimum violating nothing is the
full optimum.  The point here is not to finish: a few cheap iterations give
a reference solution whose on/off pattern seeds the cardinality cuts.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bnb import STATUS_OPTIMAL, SolveConfig, solve
from .scp import ScpInstance, Selection


@dataclass
class RowGenConfig:
    """batch_size rows are added per iteration until the sub-problem reaches
    row_cap rows (None picks min(m, max(10*n, 0.1*m))), nothing is violated,
    or max_iterations row additions have happened."""

    batch_size: int = 50
    row_cap: int | None = None
    max_iterations: int = 20
    sub_solve_config: SolveConfig = field(default_factory=lambda: SolveConfig(time_limit=30))

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.row_cap is not None and self.row_cap < 0:
            raise ValueError("row_cap must be >= 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    def resolved_row_cap(self, instance: ScpInstance) -> int:
        if self.row_cap is not None:
            return min(self.row_cap, instance.m)
        return min(instance.m, max(10 * instance.n, math.ceil(0.1 * instance.m)))


@dataclass(frozen=True)
class PretrainTracePoint:
    iteration: int
    sub_rows: int
    sub_objective: int
    violated_remaining: int
    elapsed_s: float


@dataclass(frozen=True)
class PretrainResult:
    """x_star_sub is expressed over the full column space (columns are never
    dropped); sub_rows are original row indices of the final sub-problem."""

    x_star_sub: Selection
    sub_rows: frozenset[int]
    iterations: int
    violated_remaining: int
    degraded: bool = False
    trace: tuple[PretrainTracePoint, ...] = ()


def violated_rows(instance: ScpInstance, selection: Selection) -> list[tuple[int, int]]:
    """Rows uncovered by the selection as (row index, nnz), scarcest first.

    Sorted ascending by nonzero count then row index: low-density rows are
    the hard ones, so they lead the queue for sub-problem growth.
    """
    chosen = np.asarray(selection.as_sorted(), dtype=np.int32)
    counts = kernels.cover_counts(instance.arrays, chosen)
    out = [(int(r), len(instance.row_support[r])) for r in np.flatnonzero(counts == 0)]
    out.sort(key=lambda item: (item[1], item[0]))
    return out


def pretrain(instance: ScpInstance, config: RowGenConfig | None = None,
             solver=solve) -> PretrainResult:
    """Run the iterative row-generation loop.

    Starts from the empty-row sub-problem (whose optimum is the empty
    selection), then alternates solve / add-scarcest-violated-rows until the
    row cap, a violation-free solution, or the iteration cap.  A sub-solve
    that cannot reach optimality degrades the result to the best incumbent
    found and sets the degraded flag.
    """
    config = config or RowGenConfig()
    row_cap = config.resolved_row_cap(instance)
    sub_rows: list[int] = []
    trace: list[PretrainTracePoint] = []
    t0 = time.monotonic()
    iterations = 0
    degraded = False
    x_star = Selection(frozenset())
    violated: list[tuple[int, int]] = []
    while True:
        sub = instance.subset_rows(sub_rows)
        result = solver(sub, (), config.sub_solve_config)
        if result.best is None:
            degraded = True
            break
        x_star = result.best
        if result.status != STATUS_OPTIMAL:
            degraded = True
        violated = violated_rows(instance, x_star)
        trace.append(PretrainTracePoint(iterations, len(sub_rows), x_star.objective,
                                        len(violated), time.monotonic() - t0))
        if degraded or len(sub_rows) >= row_cap or not violated \
                or iterations >= config.max_iterations:
            break
        sub_rows.extend(r for r, _ in violated[:config.batch_size])
        iterations += 1
    return PretrainResult(x_star, frozenset(sub_rows), iterations, len(violated),
                          degraded, tuple(trace))


def write_pretrain_trace(result: PretrainResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "sub_rows", "sub_objective",
                         "violated_remaining", "elapsed_s"])
        for point in result.trace:
            writer.writerow([point.iteration, point.sub_rows, point.sub_objective,
                             point.violated_remaining, f"{point.elapsed_s:.6f}"])
