import pytest

from buscover import bnb, evaluate, scp, trajectory


def _grid_and_instance(scenario):
    grid = trajectory.build_time_grid(scenario.active_start, scenario.active_end,
                                      scenario.refresh_min)
    coverage = trajectory.build_coverage(scenario, grid)
    return grid, coverage, scp.assemble_instance(coverage, grid, scenario.trips)


def _all_trips_plan(scenario):
    return evaluate.AllocationPlan(frozenset(t.id for t in scenario.trips), "greedy")


# --- undetected streets -----------------------------------------------------------

def test_all_trips_fully_covered_scenario_scores_zero(scenario):
    _grid_and_instance(scenario)  # raises if the scenario is not fully coverable
    counts = evaluate.undetected_streets(scenario, _all_trips_plan(scenario),
                                         scenario.refresh_min)
    assert all(c == 0 for c in counts)


def test_empty_plan_scores_street_count(scenario):
    counts = evaluate.undetected_streets(
        scenario, evaluate.AllocationPlan(frozenset(), "random(size=0,seed=0)"), 30)
    assert counts == [len(scenario.network.streets)] * len(counts)


def test_exact_cover_scores_zero_at_refresh_window(scenario):
    grid, coverage, instance = _grid_and_instance(scenario)
    result = bnb.solve(instance, (), bnb.SolveConfig(time_limit=30))
    assert result.status == "optimal"
    plan = evaluate.AllocationPlan(
        frozenset(instance.col_meta[j] for j in result.best.chosen), "optimal")
    counts = evaluate.undetected_streets(scenario, plan, scenario.refresh_min)
    # a feasible cover detects every street in every half-period cell, so no
    # refresh-period window can miss a street
    assert all(c == 0 for c in counts)
    assert len(counts) == int((scenario.active_end - scenario.active_start)
                              / scenario.refresh_min)


def test_half_period_window_equals_violated_rows(scenario):
    """Cross-check of the two detection paths: span-based evaluation at
    window = refresh/2 must agree cell-for-cell with instance coverage."""
    grid, coverage, instance = _grid_and_instance(scenario)
    plan = evaluate.random_plan(scenario.trips, 12, seed=5)
    counts = evaluate.undetected_streets(scenario, plan, scenario.refresh_min / 2)
    cols = frozenset(j for j, tid in enumerate(instance.col_meta)
                     if tid in plan.trips)
    _, violated = scp.is_feasible(instance, scp.Selection(cols))
    assert sum(counts) == len(violated)
    # per-window breakdown matches the violated row metadata
    per_window = [0] * grid.interval_count
    for r in violated:
        _, interval = instance.row_meta[r]
        per_window[interval] += 1
    assert counts == per_window


def test_window_must_divide_period(scenario):
    with pytest.raises(ValueError):
        evaluate.undetected_streets(scenario, _all_trips_plan(scenario), 37)


def test_unknown_trip_rejected(scenario):
    plan = evaluate.AllocationPlan(frozenset({999999}), "random(size=1,seed=0)")
    with pytest.raises(ValueError):
        evaluate.undetected_streets(scenario, plan, 30)


def test_adding_trips_never_hurts(scenario):
    small = evaluate.random_plan(scenario.trips, 10, seed=1)
    bigger = evaluate.AllocationPlan(
        small.trips | frozenset(list(t.id for t in scenario.trips)[:20]), "greedy")
    counts_small = evaluate.undetected_streets(scenario, small, 30)
    counts_big = evaluate.undetected_streets(scenario, bigger, 30)
    assert all(b <= s for s, b in zip(counts_small, counts_big))


# --- random plans ------------------------------------------------------------------

def test_random_plan_sizes_and_determinism(scenario):
    assert evaluate.random_plan(scenario.trips, 0, seed=1).trips == frozenset()
    full = evaluate.random_plan(scenario.trips, len(scenario.trips), seed=1)
    assert full.trips == frozenset(t.id for t in scenario.trips)
    a = evaluate.random_plan(scenario.trips, 7, seed=42)
    b = evaluate.random_plan(scenario.trips, 7, seed=42)
    assert a.trips == b.trips
    with pytest.raises(ValueError):
        evaluate.random_plan(scenario.trips, len(scenario.trips) + 1, seed=0)


# --- compare_plans -----------------------------------------------------------------

def test_compare_plans_report_shape(scenario):
    plan = _all_trips_plan(scenario)
    report = evaluate.compare_plans(scenario, plan, [5, 15], trials_per_size=4,
                                    window_min=30, seed=9)
    assert report.plans[0].size == plan.size
    assert set(report.random_trials) == {5, 15}
    assert all(len(trials) == 4 for trials in report.random_trials.values())
    assert len(report.random_mean_counts(5)) == report.window_count


def test_compare_plans_monotone_in_size(scenario):
    """Paired one-sided sign check: larger random plans should not detect
    fewer streets (seeded, so deterministic)."""
    plan = _all_trips_plan(scenario)
    report = evaluate.compare_plans(scenario, plan, [8, 16, 32], trials_per_size=10,
                                    window_min=30, seed=2)
    sizes = [8, 16, 32]
    for small, large in zip(sizes, sizes[1:]):
        wins = losses = 0
        for t_small, t_large in zip(report.random_trials[small],
                                    report.random_trials[large]):
            if t_small.mean > t_large.mean:
                wins += 1
            elif t_small.mean < t_large.mean:
                losses += 1
        assert wins > losses
        assert report.random_mean(small) >= report.random_mean(large)


def test_compare_plans_threads_equivalent(scenario):
    plan = _all_trips_plan(scenario)
    seq = evaluate.compare_plans(scenario, plan, [6], 3, 30, seed=4, threads=1)
    par = evaluate.compare_plans(scenario, plan, [6], 3, 30, seed=4, threads=4)
    assert [t.counts for t in seq.random_trials[6]] == \
           [t.counts for t in par.random_trials[6]]


# --- speedup table -----------------------------------------------------------------

def _log(pairs):
    log = bnb.IncumbentLog()
    for t, obj in pairs:
        log.record(t, obj)
    return log


def test_speedup_reported_values():
    bench = _log([(1290, 622), (2945, 606), (32312, 574)])
    stcb = _log([(399, 622), (1070, 606), (4990, 574)])
    rows = evaluate.speedup_table(bench, stcb, [622, 606, 574])
    assert [f"{r.percent:.2f}" for r in rows] == ["223.31", "175.23", "547.54"]


def test_speedup_equal_times_zero_percent():
    bench = _log([(10.0, 50)])
    stcb = _log([(10.0, 50)])
    (row,) = evaluate.speedup_table(bench, stcb, [50])
    assert row.percent == pytest.approx(0.0)


def test_speedup_first_crossing_time_used():
    bench = _log([(1.0, 30), (2.0, 20), (3.0, 10)])
    stcb = _log([(0.5, 25), (0.9, 10)])
    (row,) = evaluate.speedup_table(bench, stcb, [25])
    assert row.benchmark_s == 2.0  # first benchmark entry at or below 25
    assert row.stcb_s == 0.5


def test_speedup_unreached_marked(tmp_path):
    bench = _log([(5.0, 100)])
    stcb = _log([(1.0, 90)])
    rows = evaluate.speedup_table(bench, stcb, [95, 80])
    assert rows[0].benchmark_s is None and rows[0].stcb_s == 1.0
    assert rows[1].benchmark_s is None and rows[1].stcb_s is None
    assert rows[0].percent is None
    path = tmp_path / "speedup.csv"
    evaluate.write_speedup_csv(rows, path, benchmark_limit=40000, stcb_limit=40000)
    text = path.read_text()
    assert ">40000" in text and "/" in text


def test_speedup_requires_entries():
    with pytest.raises(ValueError):
        evaluate.speedup_table(bnb.IncumbentLog(), _log([(1.0, 5)]), [5])


# --- report export ------------------------------------------------------------------

def test_report_csv_layout(tmp_path, scenario):
    plan = _all_trips_plan(scenario)
    report = evaluate.compare_plans(scenario, plan, [5], 2, 30, seed=1)
    path = tmp_path / "report.csv"
    evaluate.write_report_csv(report, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "plan,size,window_index,undetected"
    expected = (1 + 2) * report.window_count + report.window_count  # plans + mean rows
    assert len(lines) - 1 == expected


def test_plots_emit_files(tmp_path, scenario):
    plan = _all_trips_plan(scenario)
    report = evaluate.compare_plans(scenario, plan, [5], 2, 30, seed=1)
    fig1 = tmp_path / "undetected.svg"
    evaluate.plot_undetected(report, fig1)
    log = _log([(0.1, 20), (1.0, 15)])
    fig2 = tmp_path / "curves.svg"
    evaluate.plot_incumbents({"benchmark": log, "stcb": log.shifted(0.5)}, fig2)
    assert fig1.stat().st_size > 0 and fig2.stat().st_size > 0
