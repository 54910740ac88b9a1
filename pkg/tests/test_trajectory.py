import random

import pytest

from buscover import city, trajectory
from buscover.errors import GridError

from conftest import tiny_scenario


# --- time grid ----------------------------------------------------------------

def test_grid_paper_numbers():
    grid = trajectory.build_time_grid(360, 1140, 30)
    assert grid.interval_count == 52
    assert grid.interval_min == 15
    assert grid.intervals[0] == (360, 375)
    assert grid.intervals[-1] == (1125, 1140)


def test_grid_two_intervals():
    grid = trajectory.build_time_grid(0, 60, 60)
    assert grid.interval_count == 2 and grid.interval_min == 30


def test_grid_six_intervals():
    grid = trajectory.build_time_grid(480, 540, 20)
    assert grid.interval_count == 6 and grid.interval_min == 10


def test_grid_indivisible_suggests_alternative():
    with pytest.raises(GridError) as err:
        trajectory.build_time_grid(360, 1140, 25)
    suggestion = err.value.suggested_refresh
    assert suggestion is not None
    # the suggestion itself must tile the period
    assert abs(2 * 780 / suggestion - round(2 * 780 / suggestion)) < 1e-9


def test_grid_validation():
    with pytest.raises(ValueError):
        trajectory.build_time_grid(500, 400, 30)
    with pytest.raises(ValueError):
        trajectory.build_time_grid(0, 100, -5)


# --- traversal spans ----------------------------------------------------------

def _line_network(n_streets, length_m=500.0):
    streets = [city.Street(i, length_m, ((float(i), 0.0), (float(i + 1), 0.0)), 1)
               for i in range(n_streets)]
    return city.StreetNetwork.from_streets(streets)


def test_spans_hand_kinematics():
    # 3 streets x 0.5 km at 30 km/h (0.5 km/min) from 6:00: one minute each
    net = _line_network(3)
    route = city.BusRoute(0, (0, 1, 2))
    trip = city.BusTrip(0, 0, 360, 30)
    spans = trajectory.trip_traversal_spans(trip, net, [route])
    assert spans == [(0, 360, 361), (1, 361, 362), (2, 362, 363)]


def test_spans_single_street():
    net = _line_network(1, length_m=750.0)
    trip = city.BusTrip(0, 0, 400, 30)
    (sid, t0, t1), = trajectory.trip_traversal_spans(trip, net, [city.BusRoute(0, (0,))])
    assert sid == 0 and t0 == 400
    assert t1 - t0 == pytest.approx(750.0 / 500.0)


def test_spans_speed_linearity():
    net = _line_network(4)
    route = city.BusRoute(0, (0, 1, 2, 3))
    slow = trajectory.trip_traversal_spans(city.BusTrip(0, 0, 360, 30), net, [route])
    fast = trajectory.trip_traversal_spans(city.BusTrip(1, 0, 360, 60), net, [route])
    for (_, s0, s1), (_, f0, f1) in zip(slow, fast):
        assert (f1 - f0) == pytest.approx((s1 - s0) / 2)


# --- coverage -----------------------------------------------------------------

def _scenario_for(trips, n_streets=3, start=360, end=1140, refresh=30):
    net = _line_network(n_streets)
    route = city.BusRoute(0, tuple(range(n_streets)))
    return city.CityScenario(net, (route,), tuple(trips), start, end, refresh)


def test_coverage_three_street_trip_first_interval_only():
    scenario = _scenario_for([city.BusTrip(0, 0, 360, 30)])
    grid = trajectory.build_time_grid(360, 1140, 30)
    cov = trajectory.build_coverage(scenario, grid)
    for sid in (0, 1, 2):
        assert cov.trips_on(sid, 0) == {0}
        for t in range(1, grid.interval_count):
            assert not cov.trips_on(sid, t)


def test_coverage_boundary_span_hits_both_intervals():
    # one 1000 m street at 30 km/h -> 2-minute span (374, 376) crossing 375
    scenario = _scenario_for([city.BusTrip(0, 0, 374, 30)], n_streets=1)
    net = city.StreetNetwork.from_streets(
        [city.Street(0, 1000.0, ((0.0, 0.0), (1.0, 0.0)), 1)])
    scenario = city.CityScenario(net, (city.BusRoute(0, (0,)),),
                                 (city.BusTrip(0, 0, 374, 30),), 360, 1140, 30)
    grid = trajectory.build_time_grid(360, 1140, 30)
    cov = trajectory.build_coverage(scenario, grid)
    assert cov.trips_on(0, 0) == {0}
    assert cov.trips_on(0, 1) == {0}
    assert not cov.trips_on(0, 2)


def test_coverage_trip_outside_period_absent():
    scenario = _scenario_for([city.BusTrip(0, 0, 100, 30)])
    grid = trajectory.build_time_grid(360, 1140, 30)
    cov = trajectory.build_coverage(scenario, grid)
    assert cov.membership_count() == 0


def test_coverage_boundary_touch_does_not_count():
    # span exactly (345, 360) ends at the period start: zero measure inside
    scenario = _scenario_for([city.BusTrip(0, 0, 345, 30)], n_streets=3,
                             start=360, end=480)
    grid = trajectory.build_time_grid(360, 480, 30)
    cov = trajectory.build_coverage(scenario, grid)
    # streets take 1 min each: spans (345,346),(346,347),(347,348) all before start
    assert cov.membership_count() == 0


def test_coverage_order_independent(scenario):
    grid = trajectory.build_time_grid(scenario.active_start, scenario.active_end,
                                      scenario.refresh_min)
    cov1 = trajectory.build_coverage(scenario, grid)
    shuffled = city.CityScenario(scenario.network, scenario.routes,
                                 tuple(reversed(scenario.trips)),
                                 scenario.active_start, scenario.active_end,
                                 scenario.refresh_min)
    cov2 = trajectory.build_coverage(shuffled, grid)
    assert cov1.cells == cov2.cells


def test_coverage_against_second_resolution_oracle():
    """Independent oracle: step every trip at 1-second resolution, locate the
    street occupied at each step, and compare cell membership both ways."""
    scenario = tiny_scenario(seed=9, rows=3, cols=3, n_routes=5, route_len=6,
                             tpr=4, headway=25, first_dep=365, speed=24,
                             start=360, end=540, refresh=60)
    grid = trajectory.build_time_grid(360, 540, 60)
    cov = trajectory.build_coverage(scenario, grid)

    sampled = set()
    routes = scenario.routes_by_id()
    streets = scenario.network.by_id()
    for trip in scenario.trips:
        route = routes[trip.route_id]
        speed_m_per_min = trip.speed_kmh * 1000 / 60
        cum = [0.0]
        for sid in route.path:
            cum.append(cum[-1] + streets[sid].length_m)
        total_min = cum[-1] / speed_m_per_min
        step = 1.0 / 60.0
        t = trip.departure_min + step / 2  # sample strictly inside spans
        while t < trip.departure_min + total_min:
            dist = (t - trip.departure_min) * speed_m_per_min
            k = next(i for i in range(len(route.path)) if cum[i + 1] > dist)
            if grid.active_start < t < grid.active_end:
                idx = int((t - grid.active_start) / grid.interval_min)
                cell_start = grid.active_start + idx * grid.interval_min
                if cell_start < t < cell_start + grid.interval_min:
                    sampled.add((route.path[k], idx, trip.id))
            t += step

    members = {(sid, idx, tid) for (sid, idx), trips in cov.cells.items()
               for tid in trips}
    # every sampled occupancy instant must be a recorded membership
    assert sampled <= members
    # memberships the sampler missed can only be slivers shorter than ~2 steps
    for sid, idx, tid in members - sampled:
        trip = scenario.trips_by_id()[tid]
        spans = trajectory.trip_traversal_spans(trip, scenario.network, routes)
        lo, hi = grid.interval(idx)
        overlap = max(min(t1, hi) - max(t0, lo)
                      for s, t0, t1 in spans if s == sid)
        assert overlap < 2.5 / 60.0


# --- detection gaps -----------------------------------------------------------

def test_gap_regular_pattern():
    times = list(range(360, 1141, 15))
    assert trajectory.max_detection_gap(times, 360, 1140) == 15


def test_gap_empty_is_full_period():
    assert trajectory.max_detection_gap([], 360, 1140) == 780


def test_gap_counts_edges():
    assert trajectory.max_detection_gap([500], 360, 1140) == 640


def test_gap_validation():
    with pytest.raises(ValueError):
        trajectory.max_detection_gap([5, 3], 0, 10)
    with pytest.raises(ValueError):
        trajectory.max_detection_gap([20], 0, 10)


def test_half_interval_pattern_bounds_gap():
    """One detection per half-period cell forces gaps <= the refresh period
    (unit-scale check; the acceptance suite runs the 10k-trial version)."""
    rng = random.Random(123)
    for _ in range(500):
        refresh = rng.choice([10, 20, 30, 60])
        grid = trajectory.build_time_grid(360, 1140, refresh)
        times = sorted(rng.uniform(*grid.interval(i))
                       for i in range(grid.interval_count))
        assert trajectory.max_detection_gap(times, 360, 1140) <= refresh + 1e-9


# --- export -------------------------------------------------------------------

def test_coverage_csv_round_structure(tmp_path, scenario):
    grid = trajectory.build_time_grid(scenario.active_start, scenario.active_end,
                                      scenario.refresh_min)
    cov = trajectory.build_coverage(scenario, grid)
    path = tmp_path / "coverage.csv"
    trajectory.write_coverage_csv(cov, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "street_id,interval_index,trip_id"
    assert len(lines) - 1 == cov.membership_count()
    sid, idx, tid = (int(v) for v in lines[1].split(","))
    assert tid in cov.trips_on(sid, idx)
