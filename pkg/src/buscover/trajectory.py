"""Time discretization and trip-to-street coverage.

The detection guarantee rests on halving the refresh period: if the active
period is tiled by intervals of width refresh_min/2 and every street sees at
least one probing pass in every interval, then any two consecutive passes on
a street are at most refresh_min apart (two passes either share an interval
or sit in adjacent ones).

Coverage is attributed by positive-measure overlap: a trip belongs to the
cell (street j, interval t) iff its traversal span on j overlaps interval t
with positive duration.  Touching an interval boundary at a single instant
does not count.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .city import BusRoute, BusTrip, CityScenario, StreetNetwork
from .errors import GridError, IntegrityError

_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Tiling of [active_start, active_end) into interval_count half-period cells."""

    refresh_min: float
    active_start: float
    active_end: float
    interval_count: int

    def __post_init__(self):
        span = self.active_end - self.active_start
        if span <= 0 or self.refresh_min <= 0:
            raise ValueError("active period must be non-empty and refresh period positive")
        expected = 2.0 * span / self.refresh_min
        if self.interval_count < 1 or abs(expected - self.interval_count) > 1e-6:
            raise ValueError(
                f"interval_count {self.interval_count} inconsistent with period/refresh "
                f"(expected {expected})")

    @property
    def interval_min(self) -> float:
        """Width of one cell: half the refresh period."""
        return self.refresh_min / 2.0

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        w = self.interval_min
        s = self.active_start
        return tuple((s + i * w, s + (i + 1) * w) for i in range(self.interval_count))

    def interval(self, index: int) -> tuple[float, float]:
        if not 0 <= index < self.interval_count:
            raise IndexError(f"interval index {index} out of range")
        w = self.interval_min
        return (self.active_start + index * w, self.active_start + (index + 1) * w)

    def overlapping(self, t0: float, t1: float) -> tuple[int, ...]:
        """Indices of cells overlapping (t0, t1) with positive measure."""
        if t1 - t0 <= _TOL:
            return ()
        start, end = self.active_start, self.active_end
        if t1 <= start + _TOL or t0 >= end - _TOL:
            return ()
        w = self.interval_min
        lo = max(int(math.floor((max(t0, start) - start) / w)) - 1, 0)
        hi = min(int(math.ceil((min(t1, end) - start) / w)) + 1, self.interval_count)
        out = []
        for i in range(lo, hi):
            cell_start = start + i * w
            if min(t1, cell_start + w) - max(t0, cell_start) > _TOL:
                out.append(i)
        return tuple(out)


def build_time_grid(active_start: float, active_end: float, refresh_min: float) -> TimeGrid:
    """Validate and build the half-period time grid.

    The active period must be divisible into cells of width refresh_min/2;
    otherwise a GridError suggests the nearest refresh period that tiles it.
    """
    if active_start >= active_end:
        raise ValueError("active_start must be < active_end")
    if refresh_min <= 0:
        raise ValueError("refresh period must be > 0")
    span = active_end - active_start
    exact = 2.0 * span / refresh_min
    count = round(exact)
    if count < 1 or abs(exact - count) > 1e-9:
        candidates = [2.0 * span / q for q in (max(1, count - 1), max(1, count), count + 1)]
        suggestion = min(candidates, key=lambda t: abs(t - refresh_min))
        raise GridError(
            f"active period of {span} min is not divisible into {refresh_min}/2-min cells; "
            f"nearest valid refresh period is {suggestion:g} min",
            suggested_refresh=suggestion)
    return TimeGrid(float(refresh_min), float(active_start), float(active_end), count)


@dataclass(frozen=True)
class CoverageSet:
    """For every (street, interval) cell, the set of trips passing through it."""

    street_ids: tuple[int, ...]
    interval_count: int
    cells: Mapping[tuple[int, int], frozenset[int]]

    def __post_init__(self):
        streets = set(self.street_ids)
        for (sid, t) in self.cells:
            if sid not in streets:
                raise IntegrityError(f"coverage cell references unknown street {sid}")
            if not 0 <= t < self.interval_count:
                raise IntegrityError(f"coverage cell references interval {t} out of range")

    def trips_on(self, street_id: int, interval: int) -> frozenset[int]:
        return self.cells.get((street_id, interval), frozenset())

    def membership_count(self) -> int:
        return sum(len(v) for v in self.cells.values())


def _resolve_route(routes, route_id: int) -> BusRoute:
    if isinstance(routes, Mapping):
        route = routes.get(route_id)
    else:
        route = next((r for r in routes if r.id == route_id), None)
    if route is None:
        raise IntegrityError(f"trip references unknown route {route_id}")
    return route


def trip_traversal_spans(trip: BusTrip, network: StreetNetwork,
                         routes) -> list[tuple[int, float, float]]:
    """Constant-speed traversal times for each street on the trip's route.

    Returns (street_id, enter_min, exit_min) triples, contiguous and
    increasing from the departure time.
    """
    route = _resolve_route(routes, trip.route_id)
    by_id = network.by_id()
    meters_per_min = trip.speed_kmh * 1000.0 / 60.0
    t = trip.departure_min
    spans = []
    for sid in route.path:
        street = by_id.get(sid)
        if street is None:
            raise IntegrityError(f"route {route.id} references unknown street {sid}")
        duration = street.length_m / meters_per_min
        spans.append((sid, t, t + duration))
        t += duration
    return spans


def build_coverage(scenario: CityScenario, grid: TimeGrid) -> CoverageSet:
    """Accumulate trip passes into per-(street, interval) coverage sets.

    A span crossing a cell boundary contributes to both cells.  The result is
    independent of trip processing order (set union commutes).
    """
    routes = scenario.routes_by_id()
    cells: dict[tuple[int, int], set[int]] = {}
    for trip in scenario.trips:
        for sid, t0, t1 in trip_traversal_spans(trip, scenario.network, routes):
            for t in grid.overlapping(t0, t1):
                cells.setdefault((sid, t), set()).add(trip.id)
    frozen = {key: frozenset(v) for key, v in cells.items()}
    return CoverageSet(tuple(sorted(scenario.network.street_ids)),
                       grid.interval_count, frozen)


def max_detection_gap(detection_times: Sequence[float], active_start: float,
                      active_end: float) -> float:
    """Largest time between consecutive detections, including the period edges.

    An empty detection list yields the full period length.
    """
    if active_start >= active_end:
        raise ValueError("active_start must be < active_end")
    times = list(detection_times)
    if not times:
        return active_end - active_start
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("detection times must be sorted")
    if times[0] < active_start - _TOL or times[-1] > active_end + _TOL:
        raise ValueError("detection times must lie within the active period")
    gaps = [times[0] - active_start]
    gaps.extend(b - a for a, b in zip(times, times[1:]))
    gaps.append(active_end - times[-1])
    return max(gaps)


def write_coverage_csv(coverage: CoverageSet, path) -> None:
    """Export coverage memberships as (street_id, interval_index, trip_id) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["street_id", "interval_index", "trip_id"])
        for (sid, t) in sorted(coverage.cells):
            for trip_id in sorted(coverage.cells[(sid, t)]):
                writer.writerow([sid, t, trip_id])
