"""Exact branch and bound for uni-cost set covering with injectable cuts.

The engine is anytime: a greedy warm start becomes the root incumbent, then
depth-first dives (always descending into the branch that fixes the chosen
column to 1) find improving incumbents fast, while a best-bound heap of the
0-branch siblings drives the optimality proof.  Every incumbent improvement
is time-stamped into an IncumbentLog so time-to-objective comparisons can be
made between runs.

Lower bounds come from a greedy dual-ascent pass (a dual-feasible solution
of the covering LP, extended to the injected cut rows), which is valid but
cheap enough to run at every node.  A single exact LP relaxation can be
solved at the root (config.root_lp) to supply fractional values for the
branching rule: branch on the column maximizing fractional value times the
number of uncovered rows it covers, ties by lowest index.

Cuts are hard constraints: a selection is accepted only if every >= cut
support holds at least rhs chosen columns and every <= cut support holds at
most rhs.  When fixing columns saturates a <= cut, the rest of its support
becomes unavailable for the subtree.
"""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InfeasibleError
from .scp import ScpInstance, Selection

logger = logging.getLogger(__name__)

GE = ">="
LE = "<="

STATUS_OPTIMAL = "optimal"
STATUS_TIME_LIMIT = "feasible-time-limit"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNKNOWN = "unknown"

_INT_EPS = 1e-6


def _int_ceil(x: float) -> int:
    return math.ceil(x - _INT_EPS)


@dataclass(frozen=True)
class LinearCut:
    """A cardinality constraint over a column subset: sum of x over support
    (>= or <=) rhs."""

    support: frozenset[int]
    sense: str
    rhs: int

    def __post_init__(self):
        if not self.support:
            raise ValueError("cut support must be non-empty")
        if self.sense not in (GE, LE):
            raise ValueError(f"cut sense must be '>=' or '<=', got {self.sense!r}")
        if not 0 <= self.rhs <= len(self.support):
            raise ValueError(f"cut rhs must lie in [0, |support|], got {self.rhs}")

    def satisfied_by(self, chosen: frozenset[int]) -> bool:
        hit = len(self.support & chosen)
        return hit >= self.rhs if self.sense == GE else hit <= self.rhs


@dataclass
class SolveConfig:
    time_limit: float = 60.0
    gap_tolerance: float = 0.0
    node_limit: int | None = None
    seed: int = 0
    log_every: float = 5.0
    root_lp: bool = True
    presolve: str = "auto"  # auto | full | light | off

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be >= 0")
        if self.presolve not in ("auto", "full", "light", "off"):
            raise ValueError(f"unknown presolve mode {self.presolve!r}")


@dataclass
class IncumbentLog:
    """Time-stamped objective trajectory of the incumbent."""

    entries: list[tuple[float, int]] = field(default_factory=list)
    final_status: str = STATUS_UNKNOWN

    def record(self, elapsed: float, objective: int) -> None:
        if self.entries:
            last_t, last_obj = self.entries[-1]
            if objective >= last_obj:
                raise ValueError("incumbent objectives must strictly decrease")
            elapsed = max(elapsed, last_t)
        self.entries.append((elapsed, objective))

    def best_objective(self) -> int | None:
        return self.entries[-1][1] if self.entries else None

    def first_time_at_or_below(self, target: float) -> float | None:
        for elapsed, obj in self.entries:
            if obj <= target:
                return elapsed
        return None

    def shifted(self, offset: float) -> "IncumbentLog":
        out = IncumbentLog(final_status=self.final_status)
        out.entries = [(t + offset, obj) for t, obj in self.entries]
        return out


def write_incumbent_csv(log: IncumbentLog, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["elapsed_s", "objective"])
        for elapsed, obj in log.entries:
            writer.writerow([f"{elapsed:.6f}", obj])


def read_incumbent_csv(path) -> IncumbentLog:
    import csv

    log = IncumbentLog()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            log.entries.append((float(row["elapsed_s"]), int(float(row["objective"]))))
    return log


@dataclass
class SolveResult:
    best: Selection | None
    log: IncumbentLog
    lower_bound: float
    nodes_explored: int
    # (elapsed, chosen set) snapshot per incumbent, for post-hoc auditing
    incumbents: tuple[tuple[float, frozenset[int]], ...] = ()
    aborted: bool = False

    @property
    def status(self) -> str:
        return self.log.final_status


def _split_cuts(cuts, n):
    ge, le = [], []
    for cut in cuts or ():
        support = np.fromiter(sorted(cut.support), dtype=np.int32)
        if len(support) and (support[0] < 0 or support[-1] >= n):
            raise ValueError("cut support references columns out of range")
        (ge if cut.sense == GE else le).append((support, int(cut.rhs)))
    return ge, le


# --- lower bound -------------------------------------------------------------

def _cut_aware_bound(instance, ge, le, one_mask, avail, skip_row):
    """Dual-ascent bound for the subproblem with the given fixings.

    Returns (bound_including_fixed_ones, avail) where avail has been reduced
    by saturated <= cuts; math.inf signals fractional infeasibility.
    """
    arrays = instance.arrays
    n_fixed = int(one_mask.sum())
    avail = avail.copy()
    for support, rhs in le:
        used = int(one_mask[support].sum())
        if used > rhs:
            return math.inf, avail
        if used == rhs:
            avail[support] = False
    core, slack = kernels.dual_ascent(arrays, skip_row.astype(np.uint8),
                                      (~avail).astype(np.uint8))
    if math.isinf(core):
        return math.inf, avail
    extra = 0.0
    for support, rhs in ge:
        deficit = rhs - int(one_mask[support].sum())
        if deficit <= 0:
            continue
        live = support[avail[support]]
        if len(live) < deficit:
            return math.inf, avail
        u = float(slack[live].min())
        if u > 0.0:
            extra += deficit * u
            slack[live] -= u
    return n_fixed + core + extra, avail


def lp_lower_bound(instance: ScpInstance, cuts=(), fixed_zero=frozenset(),
                   fixed_one=frozenset()) -> float:
    """A valid lower bound on the optimal integer objective of the restricted
    problem (columns in fixed_one at 1, fixed_zero at 0).

    Computed by greedy dual ascent on the covering rows plus the >= cut rows,
    which is dual-feasible for the LP relaxation, so the bound never exceeds
    the LP (or integer) optimum.  Returns math.inf when the restriction is
    infeasible even fractionally.
    """
    fixed_zero, fixed_one = frozenset(fixed_zero), frozenset(fixed_one)
    if fixed_zero & fixed_one:
        raise ValueError("fixed_zero and fixed_one must be disjoint")
    for j in fixed_zero | fixed_one:
        if not 0 <= j < instance.n:
            raise ValueError(f"fixed column {j} out of range")
    ge, le = _split_cuts(cuts, instance.n)
    one_mask = np.zeros(instance.n, dtype=bool)
    if fixed_one:
        one_mask[sorted(fixed_one)] = True
    avail = ~one_mask
    if fixed_zero:
        avail[sorted(fixed_zero)] = False
    counts = kernels.cover_counts(instance.arrays,
                                  np.fromiter(sorted(fixed_one), dtype=np.int32,
                                              count=len(fixed_one)))
    bound, _ = _cut_aware_bound(instance, ge, le, one_mask, avail,
                                skip_row=counts > 0)
    return bound


# --- reduction ---------------------------------------------------------------

@dataclass(frozen=True)
class ReduceResult:
    instance: ScpInstance
    forced_one: tuple[int, ...]
    forced_zero: tuple[int, ...]
    kept_rows: tuple[int, ...]
    removed_rows: tuple[int, ...]


def _dominated_rows(supports, active):
    """Rows whose support is a superset of another active row's support."""
    sets = [frozenset(s) for s in supports]
    order = sorted((r for r in range(len(supports)) if active[r]),
                   key=lambda r: (len(sets[r]), r))
    kept_by_col: dict[int, list[int]] = {}
    dominated = []
    for r in order:
        sup = sets[r]
        probe = min(sup, key=lambda c: len(kept_by_col.get(c, ())))
        if any(sets[s] <= sup for s in kept_by_col.get(probe, ()) if s != r):
            dominated.append(r)
            continue
        for c in sup:
            kept_by_col.setdefault(c, []).append(r)
    return dominated


def reduce(instance: ScpInstance, cuts=()) -> ReduceResult:
    """Classical covering preprocessing, applied to fixpoint.

    (a) drop any row whose support is a superset of another row's support;
    (b) a singleton row forces its unique column to 1;
    (c) forced columns remove every row they cover.

    <= cuts interact: a cut with rhs 0 (or one saturated by forced columns)
    fixes the rest of its support to 0, and a singleton row whose only column
    is fixed to 0 makes the problem infeasible.  Reductions never change the
    optimal objective: optimum(original) = |forced_one| + optimum(reduced).
    """
    ge, le = _split_cuts(cuts, instance.n)
    m, n = instance.m, instance.n
    active = np.ones(m, dtype=bool)
    forced_one: set[int] = set()
    forced_zero: set[int] = set()

    for r in _dominated_rows(instance.row_support, active):
        active[r] = False

    live_supports = [set(s) for s in instance.row_support]
    changed = True
    while changed:
        changed = False
        for support, rhs in le:
            used = sum(1 for c in support if c in forced_one)
            if used > rhs:
                raise InfeasibleError(
                    f"<= cut over {len(support)} columns exceeded by forced columns")
            if used == rhs:
                for c in support:
                    c = int(c)
                    if c not in forced_one and c not in forced_zero:
                        forced_zero.add(c)
                        changed = True
        for r in range(m):
            if not active[r]:
                continue
            live = live_supports[r] - forced_zero
            if live != live_supports[r]:
                live_supports[r] = live
            if not live:
                raise InfeasibleError(
                    f"row {r} has all covering columns fixed to 0 by cut interaction")
            if live & forced_one:
                active[r] = False
                changed = True
            elif len(live) == 1:
                forced_one.add(next(iter(live)))
                active[r] = False
                changed = True

    kept = tuple(int(r) for r in np.flatnonzero(active))
    removed = tuple(int(r) for r in np.flatnonzero(~active))
    reduced = ScpInstance(tuple(tuple(sorted(live_supports[r])) for r in kept),
                          n, tuple(instance.row_meta[r] for r in kept),
                          instance.col_meta, instance.pruned_trips)
    return ReduceResult(reduced, tuple(sorted(forced_one)), tuple(sorted(forced_zero)),
                        kept, removed)


# --- root LP -----------------------------------------------------------------

def _root_lp(instance, ge, le, one_mask, avail, time_budget):
    """Exact LP relaxation at the root; returns (objective, fractional x) or
    (None, None) when unavailable."""
    try:
        import scipy.sparse as sp
        from scipy.optimize import linprog

        blocks = [-instance.sparse()]
        rhs = [-np.ones(instance.m)]
        n = instance.n
        zeros = lambda s: np.zeros(len(s), dtype=np.int64)  # noqa: E731
        for support, r in ge:
            blocks.append(sp.csr_matrix((np.full(len(support), -1.0),
                                         (zeros(support), support)), shape=(1, n)))
            rhs.append(np.array([-float(r)]))
        for support, r in le:
            blocks.append(sp.csr_matrix((np.ones(len(support)),
                                         (zeros(support), support)), shape=(1, n)))
            rhs.append(np.array([float(r)]))
        a_ub = sp.vstack(blocks, format="csr")
        b_ub = np.concatenate(rhs)
        bounds = []
        for j in range(n):
            if one_mask[j]:
                bounds.append((1.0, 1.0))
            elif not avail[j]:
                bounds.append((0.0, 0.0))
            else:
                bounds.append((0.0, 1.0))
        res = linprog(np.ones(n), A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                      method="highs", options={"time_limit": max(time_budget, 0.1)})
        if res.status == 0:
            return float(res.fun), np.clip(res.x, 0.0, 1.0)
    except Exception as exc:  # LP is an accelerator only; never fatal
        logger.debug("root LP unavailable: %s", exc)
    return None, None


# --- warm start --------------------------------------------------------------

def _greedy_with_cuts(instance, ge, le, row_active):
    """Greedy cover that respects <= budgets, then pads >= deficits.

    Returns a feasible chosen set or None when the greedy path gets stuck
    (it is a heuristic; failure just means no root incumbent).
    """
    arrays = instance.arrays
    if not ge and not le and row_active.all():
        ok, chosen = kernels.greedy_cover(arrays)
        return frozenset(int(j) for j in chosen) if ok else None
    n = instance.n
    avail = np.ones(n, dtype=bool)
    chosen: set[int] = set()
    budgets = [rhs for _, rhs in le]
    uncovered = row_active.copy()

    def take(j: int) -> bool:
        chosen.add(j)
        avail[j] = False
        rows_j = arrays.col_rows[arrays.col_indptr[j]:arrays.col_indptr[j + 1]]
        uncovered[rows_j] = False
        for idx, (support, _) in enumerate(le):
            if j in support:
                budgets[idx] -= 1
                if budgets[idx] < 0:
                    return False
                if budgets[idx] == 0:
                    live = support[avail[support]]
                    avail[live] = False
        return True

    while uncovered.any():
        gains = kernels.column_gains(arrays, uncovered.astype(np.uint8),
                                     avail.astype(np.uint8))
        j = int(np.argmax(gains))
        if gains[j] <= 0:
            return None
        if not take(j):
            return None
    for support, rhs in ge:
        while len(set(int(c) for c in support) & chosen) < rhs:
            live = [int(c) for c in support if avail[c]]
            if not live:
                return None
            if not take(min(live)):
                return None
    result = frozenset(chosen)
    cuts_ok = all(LinearCut(frozenset(int(c) for c in s), GE, r).satisfied_by(result)
                  for s, r in ge)
    cuts_ok &= all(LinearCut(frozenset(int(c) for c in s), LE, r).satisfied_by(result)
                   for s, r in le)
    return result if cuts_ok else None


# --- presolve ----------------------------------------------------------------

def _presolve(instance, ge, le, mode):
    """Root propagation: domination, singleton forcing, <= saturation.

    Returns (row_active, forced_one set, avail mask).  Raises InfeasibleError
    when propagation proves the problem infeasible.
    """
    m, n = instance.m, instance.n
    row_active = np.ones(m, dtype=bool)
    forced: set[int] = set()
    avail = np.ones(n, dtype=bool)
    if mode == "off" or m == 0:
        return row_active, forced, avail
    if mode == "auto":
        mode = "full" if m <= 4000 else "light"
    if mode == "full":
        for r in _dominated_rows(instance.row_support, row_active):
            row_active[r] = False
    else:
        seen: dict[frozenset[int], int] = {}
        for r, support in enumerate(instance.row_support):
            key = frozenset(support)
            if key in seen:
                row_active[r] = False
            else:
                seen[key] = r

    arrays = instance.arrays
    changed = True
    while changed:
        changed = False
        for support, rhs in le:
            used = sum(1 for c in support if int(c) in forced)
            if used > rhs:
                raise InfeasibleError("<= cut exceeded by forced columns")
            if used == rhs:
                live = support[avail[support]]
                if len(live):
                    avail[live] = False
                    changed = True
        counts = kernels.cover_counts(arrays, np.fromiter(sorted(forced), dtype=np.int32,
                                                          count=len(forced)))
        open_rows = row_active & (counts == 0)
        if not open_rows.any():
            break
        sel = avail[arrays.row_cols]
        live_per_row = np.add.reduceat(sel, arrays.row_indptr[:-1]) if len(sel) else \
            np.zeros(m, dtype=np.int64)
        live_per_row = np.where(arrays.row_sizes > 0, live_per_row, 0)
        dead = open_rows & (live_per_row == 0)
        if dead.any():
            raise InfeasibleError(
                f"{int(dead.sum())} rows lost every available column during presolve")
        singles = np.flatnonzero(open_rows & (live_per_row == 1))
        for r in singles:
            cols = arrays.row_cols[arrays.row_indptr[r]:arrays.row_indptr[r + 1]]
            if any(int(c) in forced for c in cols):
                continue  # covered by a column forced earlier in this pass
            live = cols[avail[cols]]
            if len(live) == 0:
                raise InfeasibleError(
                    f"row {int(r)} lost its last available column during presolve")
            forced.add(int(live[0]))
            avail[int(live[0])] = False
            changed = True
    return row_active, forced, avail


# --- main solve --------------------------------------------------------------

def solve(instance: ScpInstance, cuts=(), config: SolveConfig | None = None,
          abort_check=None) -> SolveResult:
    """Solve min |chosen| s.t. every row covered, subject to the given cuts.

    Anytime behavior: the best feasible selection found within the limits is
    returned, with a log entry at every incumbent improvement.  With
    gap_tolerance 0 and no limits hit the result is provably optimal.
    abort_check(elapsed_s, incumbent_objective_or_None) may return True to
    stop the search early (the result is then flagged aborted).
    """
    config = config or SolveConfig()
    if any(not support for support in instance.row_support):
        raise InfeasibleError("instance has an empty row; no cover exists")
    ge, le = _split_cuts(cuts, instance.n)
    t0 = time.monotonic()
    deadline = t0 + config.time_limit
    log = IncumbentLog()
    arrays = instance.arrays
    n = instance.n

    def finish(best, lb, nodes, snapshots, status, aborted=False):
        log.final_status = status
        if best is not None and status == STATUS_OPTIMAL:
            lb = float(best.objective)
        return SolveResult(best, log, lb, nodes, tuple(snapshots), aborted)

    try:
        row_active, forced, avail0 = _presolve(instance, ge, le, config.presolve)
    except InfeasibleError:
        log.final_status = STATUS_INFEASIBLE
        return SolveResult(None, log, math.inf, 0)

    best: frozenset[int] | None = None
    best_obj = math.inf
    snapshots: list[tuple[float, frozenset[int]]] = []

    def install(chosen: frozenset[int]):
        nonlocal best, best_obj
        obj = len(chosen)
        if obj < best_obj:
            best, best_obj = chosen, obj
            elapsed = time.monotonic() - t0
            log.record(elapsed, obj)
            snapshots.append((elapsed, chosen))

    warm = _greedy_with_cuts(instance, ge, le, np.ones(instance.m, dtype=bool))
    if warm is not None:
        install(warm)

    one_mask0 = np.zeros(n, dtype=bool)
    if forced:
        one_mask0[sorted(forced)] = True
    frac = None
    root_lb = 0.0
    if config.root_lp:
        budget = min(30.0, 0.25 * config.time_limit)
        lp_obj, lp_x = _root_lp(instance, ge, le, one_mask0, avail0, budget)
        if lp_obj is not None:
            frac = lp_x
            root_lb = lp_obj

    # heap of (bound, seq, fixed_one, fixed_zero); bounds from the parent are
    # valid (loose) bounds for the child, re-evaluated at expansion
    seq = 0
    heap: list[tuple[float, int, frozenset[int], frozenset[int]]] = []
    zero0 = frozenset(int(j) for j in np.flatnonzero(~avail0) if j not in forced)
    heapq.heappush(heap, (root_lb, seq, frozenset(forced), zero0))
    nodes = 0
    aborted = False
    limit_hit = False
    last_log = t0
    pending_bound = None  # bound of the node being dived when interrupted

    while heap:
        top_bound, _, f1, f0 = heapq.heappop(heap)
        if best is not None and _int_ceil(top_bound) >= best_obj:
            continue  # cannot improve; with gap 0 this also certifies optimality
        if best is not None and best_obj - max(top_bound, root_lb) <= \
                config.gap_tolerance * best_obj:
            lb = min(best_obj, max(top_bound, root_lb))
            status = STATUS_OPTIMAL if _int_ceil(lb) >= best_obj else STATUS_TIME_LIMIT
            return finish(Selection(best), lb, nodes, snapshots, status)

        # dive
        while True:
            now = time.monotonic()
            if now >= deadline or (config.node_limit is not None
                                   and nodes >= config.node_limit):
                limit_hit = True
                pending_bound = top_bound
                break
            if abort_check is not None and abort_check(now - t0,
                                                       None if best is None else best_obj):
                aborted = True
                pending_bound = top_bound
                break
            if now - last_log >= config.log_every:
                last_log = now
                logger.info("elapsed=%.1fs incumbent=%s open=%d nodes=%d",
                            now - t0, best_obj if best else None, len(heap), nodes)
            nodes += 1

            one_arr = np.fromiter(sorted(f1), dtype=np.int32, count=len(f1))
            one_mask = np.zeros(n, dtype=bool)
            one_mask[one_arr] = True
            avail = ~one_mask
            if f0:
                avail[sorted(f0)] = False
            counts = kernels.cover_counts(arrays, one_arr)
            covered = counts > 0
            skip = covered | ~row_active
            bound, avail = _cut_aware_bound(instance, ge, le, one_mask, avail, skip)
            if math.isinf(bound) or (best is not None and _int_ceil(bound) >= best_obj):
                break
            top_bound = max(top_bound, bound)

            uncovered = row_active & ~covered
            if not uncovered.any():
                deficits = [(rhs - int(one_mask[s].sum()), i)
                            for i, (s, rhs) in enumerate(ge)]
                worst = max(deficits, default=(0, -1))
                if worst[0] <= 0:
                    # leaf: all rows covered, all cuts satisfied by the fixed set
                    install(frozenset(int(j) for j in f1))
                    break
                support, _ = ge[worst[1]]
                live = support[avail[support]]
                if len(live) == 0:
                    break
                j = int(live[0])
            else:
                gains = kernels.column_gains(arrays, uncovered.astype(np.uint8),
                                             avail.astype(np.uint8))
                if frac is not None:
                    scores = frac * gains
                    j = int(np.argmax(scores))
                    if scores[j] <= 0:
                        j = int(np.argmax(gains))
                else:
                    j = int(np.argmax(gains))
                if gains[j] <= 0:
                    break  # some uncovered row unreachable (dual bound caught +inf already)
            seq += 1
            heapq.heappush(heap, (bound, seq, f1, f0 | {j}))
            f1 = f1 | {j}
        if limit_hit or aborted:
            break

    if limit_hit or aborted:
        open_bounds = [b for b, _, _, _ in heap]
        if pending_bound is not None:
            open_bounds.append(pending_bound)
        min_open = min(open_bounds, default=math.inf)
        lb = min(best_obj, max(min_open, root_lb))
        if best is not None:
            return finish(Selection(best), lb, nodes, snapshots,
                          STATUS_TIME_LIMIT, aborted)
        return finish(None, lb, nodes, snapshots, STATUS_UNKNOWN, aborted)
    if best is not None:
        return finish(Selection(best), float(best_obj), nodes, snapshots, STATUS_OPTIMAL)
    return finish(None, math.inf, nodes, snapshots, STATUS_INFEASIBLE)
