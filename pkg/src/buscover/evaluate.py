"""Detection-quality and time-to-objective evaluation.

Detection quality follows the "undetected streets per window" protocol: the
active period is split into consecutive non-overlapping windows and a street
counts as undetected in a window iff no equipped trip's traversal span on it
overlaps the window.  Detection is recomputed from traversal spans here, on
purpose: it is an independent path from the coverage-set construction, so
the window = half-refresh case cross-checks the covering instance.

Speedups are reported Table-style: for a list of target objectives, the
first time each incumbent log reaches the target, and the percentage
speedup (benchmark_time / stcb_time - 1) * 100.  Targets a log never
reaches are marked with the ">limit" convention.
"""
from __future__ import annotations

import csv
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .bnb import IncumbentLog
from .city import CityScenario
from .trajectory import trip_traversal_spans

_TOL = 1e-9


@dataclass(frozen=True)
class AllocationPlan:
    """A set of trips to equip with sensing kits, tagged with where it came from."""

    trips: frozenset[int]
    provenance: str = "unspecified"

    @property
    def size(self) -> int:
        return len(self.trips)


@dataclass(frozen=True)
class PlanScore:
    label: str
    size: int
    counts: tuple[int, ...]  # undetected streets per window

    @property
    def mean(self) -> float:
        return sum(self.counts) / len(self.counts) if self.counts else 0.0


@dataclass
class EvaluationReport:
    window_min: float
    window_count: int
    street_count: int
    plans: list[PlanScore] = field(default_factory=list)
    random_trials: dict[int, list[PlanScore]] = field(default_factory=dict)

    def random_mean_counts(self, size: int) -> tuple[float, ...]:
        trials = self.random_trials[size]
        return tuple(sum(t.counts[w] for t in trials) / len(trials)
                     for w in range(self.window_count))

    def random_mean(self, size: int) -> float:
        trials = self.random_trials[size]
        return sum(t.mean for t in trials) / len(trials)


def _window_grid(scenario: CityScenario, window_min: float) -> int:
    span = scenario.active_end - scenario.active_start
    count = round(span / window_min)
    if count < 1 or abs(span / window_min - count) > 1e-9:
        raise ValueError(f"window of {window_min} min does not divide the "
                         f"{span}-min active period")
    return count


def undetected_streets(scenario: CityScenario, plan: AllocationPlan,
                       window_min: float,
                       spans_by_trip: dict | None = None) -> list[int]:
    """Undetected-street count for each consecutive window of the active period.

    spans_by_trip optionally carries precomputed traversal spans (trip id ->
    list of (street, enter, exit)) so sweeps over many plans share the
    kinematics.
    """
    window_count = _window_grid(scenario, window_min)
    trips_by_id = scenario.trips_by_id()
    unknown = plan.trips - trips_by_id.keys()
    if unknown:
        raise ValueError(f"plan references unknown trips {sorted(unknown)[:10]}")
    routes = scenario.routes_by_id()
    start, end = scenario.active_start, scenario.active_end
    detected: list[set[int]] = [set() for _ in range(window_count)]
    for tid in plan.trips:
        if spans_by_trip is not None and tid in spans_by_trip:
            spans = spans_by_trip[tid]
        else:
            spans = trip_traversal_spans(trips_by_id[tid], scenario.network, routes)
            if spans_by_trip is not None:
                spans_by_trip[tid] = spans
        for sid, t0, t1 in spans:
            if t1 <= start + _TOL or t0 >= end - _TOL:
                continue
            lo = max(int(math.floor((max(t0, start) - start) / window_min)) - 1, 0)
            hi = min(int(math.ceil((min(t1, end) - start) / window_min)) + 1, window_count)
            for w in range(lo, hi):
                w_start = start + w * window_min
                if min(t1, w_start + window_min) - max(t0, w_start) > _TOL:
                    detected[w].add(sid)
    street_total = len(scenario.network.streets)
    return [street_total - len(d) for d in detected]


def random_plan(trips, size: int, seed: int) -> AllocationPlan:
    """Uniform sample of trips without replacement; deterministic per seed."""
    ids = sorted(t.id if hasattr(t, "id") else int(t) for t in trips)
    if size < 0 or size > len(ids):
        raise ValueError(f"plan size {size} must lie in [0, {len(ids)}]")
    rng = random.Random(seed)
    return AllocationPlan(frozenset(rng.sample(ids, size)), f"random(size={size},seed={seed})")


def compare_plans(scenario: CityScenario, optimal_plan: AllocationPlan,
                  random_sizes, trials_per_size: int, window_min: float,
                  seed: int, threads: int = 1,
                  extra_plans=()) -> EvaluationReport:
    """Score the optimized plan once and each random size over seeded trials.

    Trial t of every size uses seed + t, so trials are independent of
    evaluation order (and of the thread count).
    """
    window_count = _window_grid(scenario, window_min)
    spans_cache: dict = {}
    report = EvaluationReport(window_min, window_count, len(scenario.network.streets))
    report.plans.append(PlanScore(
        optimal_plan.provenance, optimal_plan.size,
        tuple(undetected_streets(scenario, optimal_plan, window_min, spans_cache))))
    for plan in extra_plans:
        report.plans.append(PlanScore(
            plan.provenance, plan.size,
            tuple(undetected_streets(scenario, plan, window_min, spans_cache))))

    jobs = [(size, trial) for size in random_sizes for trial in range(trials_per_size)]

    def run(job):
        size, trial = job
        plan = random_plan(scenario.trips, size, seed + trial)
        # per-job span dict: the shared cache is not thread-safe to grow
        local = dict(spans_cache) if threads > 1 else spans_cache
        counts = tuple(undetected_streets(scenario, plan, window_min, local))
        return size, trial, PlanScore(plan.provenance, plan.size, counts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    for size, trial, score in sorted(results, key=lambda r: (r[0], r[1])):
        report.random_trials.setdefault(size, []).append(score)
    return report


# --- speedup table -------------------------------------------------------------

@dataclass(frozen=True)
class SpeedupRow:
    objective: int
    benchmark_s: float | None
    stcb_s: float | None

    @property
    def percent(self) -> float | None:
        if self.benchmark_s is None or self.stcb_s is None or self.stcb_s <= 0:
            return None
        return (self.benchmark_s / self.stcb_s - 1.0) * 100.0


def speedup_table(benchmark_log: IncumbentLog, stcb_log: IncumbentLog,
                  target_objectives) -> list[SpeedupRow]:
    """First time each log reaches objective <= target, per target."""
    if not benchmark_log.entries or not stcb_log.entries:
        raise ValueError("both incumbent logs must be non-empty")
    rows = []
    for target in target_objectives:
        rows.append(SpeedupRow(int(target),
                               benchmark_log.first_time_at_or_below(target),
                               stcb_log.first_time_at_or_below(target)))
    return rows


def format_time_cell(value: float | None, limit: float | None) -> str:
    if value is not None:
        return f"{value:.2f}"
    return f">{limit:g}" if limit is not None else "unreached"


def write_speedup_csv(rows, path, benchmark_limit: float | None = None,
                      stcb_limit: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["objective", "benchmark_s", "stcb_s", "percent"])
        for row in rows:
            pct = f"{row.percent:.2f}" if row.percent is not None else "/"
            writer.writerow([row.objective,
                             format_time_cell(row.benchmark_s, benchmark_limit),
                             format_time_cell(row.stcb_s, stcb_limit), pct])


def write_report_csv(report: EvaluationReport, path) -> None:
    """Long-format (plan, window_index, undetected) table, one row per cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["plan", "size", "window_index", "undetected"])
        for score in report.plans:
            for w, count in enumerate(score.counts):
                writer.writerow([score.label, score.size, w, count])
        for size in sorted(report.random_trials):
            for score in report.random_trials[size]:
                for w, count in enumerate(score.counts):
                    writer.writerow([score.label, score.size, w, count])
            for w, mean in enumerate(report.random_mean_counts(size)):
                writer.writerow([f"random(size={size},mean)", size, w, f"{mean:.3f}"])


# --- plots ---------------------------------------------------------------------

def plot_undetected(report: EvaluationReport, path) -> None:
    """Bar chart of mean undetected streets per window across plans."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [score.label for score in report.plans]
    means = [score.mean for score in report.plans]
    for size in sorted(report.random_trials):
        labels.append(f"random {size}")
        means.append(report.random_mean(size))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.1), 4))
    ax.bar(range(len(labels)), means, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(f"mean undetected streets / {report.window_min:g}-min window")
    ax.set_title("Detection quality by allocation plan")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_incumbents(logs: dict[str, IncumbentLog], path) -> None:
    """Step chart of objective vs elapsed time for each labelled log."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, log in logs.items():
        if not log.entries:
            continue
        xs = [t for t, _ in log.entries]
        ys = [obj for _, obj in log.entries]
        ax.step(xs, ys, where="post", label=label)
    ax.set_xlabel("elapsed (s)")
    ax.set_ylabel("incumbent objective")
    ax.set_title("Time-to-objective")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
