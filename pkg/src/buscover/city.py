"""Street networks, bus routes, and timed trips.

The scenario model is deliberately small: streets are edges of a planar
network, a route is an ordered walk over adjacent streets, and a trip is one
timed pass of a route at constant speed.  Scenarios can be generated
synthetically (grid city + random walk routes + staggered departures) or
loaded from a JSON file with the layout::

    {
      "streets":       [{"id", "length_m", "endpoints"?, "spots"}, ...],
      "routes":        [{"id", "path": [street ids]}, ...],
      "trips":         [{"id", "route_id", "departure_min", "speed_kmh"}, ...],
      "active_period": {"start_min", "end_min"},
      "T_min":         <target refresh period in minutes>
    }

Parking-change series (used to detect the daily high-activity window) are
two-column CSV files: minute_of_day, avg_changes.
"""
from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import (
    IntegrityError,
    NoActivePeriodError,
    RouteGenerationError,
    ScenarioFormatError,
)

Coord = tuple[float, float]


@dataclass(frozen=True)
class Street:
    """One monitored street segment.

    ``endpoints`` is optional and only used for adjacency derivation and
    reporting.  ``spots`` is carried for reporting; the optimizer constrains
    coverage per street, not per parking spot.
    """

    id: int
    length_m: float
    endpoints: tuple[Coord, Coord] | None = None
    spots: int = 0

    def __post_init__(self):
        if self.length_m <= 0:
            raise ValueError(f"street {self.id}: length must be > 0, got {self.length_m}")
        if self.spots < 0:
            raise ValueError(f"street {self.id}: spots must be >= 0, got {self.spots}")


@dataclass(frozen=True)
class StreetNetwork:
    """Streets plus a symmetric adjacency relation (streets sharing an endpoint)."""

    streets: tuple[Street, ...]
    adjacency: Mapping[int, frozenset[int]]

    def __post_init__(self):
        ids = [s.id for s in self.streets]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IntegrityError(f"duplicate street ids: {dupes}", offenders=dupes)
        known = set(ids)
        bad = []
        for sid, neigh in self.adjacency.items():
            if sid not in known:
                bad.append(sid)
            for other in neigh:
                if other not in known:
                    bad.append(other)
                elif sid not in self.adjacency.get(other, frozenset()):
                    raise IntegrityError(
                        f"adjacency not symmetric: {sid} -> {other} but not back"
                    )
        if bad:
            raise IntegrityError(f"adjacency references unknown streets: {sorted(set(bad))}",
                                 offenders=sorted(set(bad)))

    @property
    def street_ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.streets)

    def by_id(self) -> dict[int, Street]:
        return {s.id: s for s in self.streets}

    @classmethod
    def from_streets(cls, streets: Sequence[Street],
                     extra_pairs: Iterable[tuple[int, int]] = ()) -> "StreetNetwork":
        """Build the network, deriving adjacency from shared endpoints.

        ``extra_pairs`` injects additional adjacencies (used when a loaded
        scenario lacks endpoint geometry and adjacency must be implied by the
        routes that traverse it).
        """
        incident: dict[Coord, set[int]] = {}
        for s in streets:
            if s.endpoints is None:
                continue
            for node in s.endpoints:
                incident.setdefault(node, set()).add(s.id)
        adj: dict[int, set[int]] = {s.id: set() for s in streets}
        for members in incident.values():
            for sid in members:
                adj[sid] |= members - {sid}
        for a, b in extra_pairs:
            adj[a].add(b)
            adj[b].add(a)
        return cls(tuple(streets), {k: frozenset(v) for k, v in sorted(adj.items())})

    def endpoint_incidence(self) -> dict[Coord, frozenset[int]]:
        """Map each endpoint coordinate to the streets meeting there."""
        incident: dict[Coord, set[int]] = {}
        for s in self.streets:
            if s.endpoints is None:
                continue
            for node in s.endpoints:
                incident.setdefault(node, set()).add(s.id)
        return {k: frozenset(v) for k, v in incident.items()}


@dataclass(frozen=True)
class BusRoute:
    id: int
    path: tuple[int, ...]

    def __post_init__(self):
        if not self.path:
            raise ValueError(f"route {self.id}: path must be non-empty")


@dataclass(frozen=True)
class BusTrip:
    id: int
    route_id: int
    departure_min: float
    speed_kmh: float

    def __post_init__(self):
        if self.speed_kmh <= 0:
            raise ValueError(f"trip {self.id}: speed must be > 0, got {self.speed_kmh}")


@dataclass(frozen=True)
class CityScenario:
    """A full world for the optimizer: network, routes, timed trips, and the
    daily active window [active_start, active_end) with target refresh period
    ``refresh_min`` (every street must be scanned at least once per
    ``refresh_min`` minutes)."""

    network: StreetNetwork
    routes: tuple[BusRoute, ...]
    trips: tuple[BusTrip, ...]
    active_start: float
    active_end: float
    refresh_min: float

    def __post_init__(self):
        if self.active_start >= self.active_end:
            raise ValueError("active_start must be < active_end")
        if self.refresh_min <= 0:
            raise ValueError("refresh period must be > 0")
        route_ids = [r.id for r in self.routes]
        if len(set(route_ids)) != len(route_ids):
            raise IntegrityError("duplicate route ids")
        trip_ids = [t.id for t in self.trips]
        if len(set(trip_ids)) != len(trip_ids):
            raise IntegrityError("duplicate trip ids")
        known_streets = set(self.network.street_ids)
        offenders = []
        for r in self.routes:
            missing = [sid for sid in r.path if sid not in known_streets]
            if missing:
                offenders.append(f"route {r.id} references missing streets {missing}")
        known_routes = set(route_ids)
        for t in self.trips:
            if t.route_id not in known_routes:
                offenders.append(f"trip {t.id} references missing route {t.route_id}")
        if offenders:
            raise IntegrityError("dangling references: " + "; ".join(offenders),
                                 offenders=offenders)
        for r in self.routes:
            for a, b in zip(r.path, r.path[1:]):
                if b not in self.network.adjacency.get(a, frozenset()):
                    raise IntegrityError(
                        f"route {r.id}: streets {a} and {b} are consecutive but not adjacent"
                    )

    def routes_by_id(self) -> dict[int, BusRoute]:
        return {r.id: r for r in self.routes}

    def trips_by_id(self) -> dict[int, BusTrip]:
        return {t.id: t for t in self.trips}


def generate_grid_city(grid_rows: int, grid_cols: int, street_length: float,
                       seed: int) -> StreetNetwork:
    """Generate a rectangular grid of streets.

    Every edge of the grid graph is one street, so the street count is
    grid_rows*(grid_cols-1) + grid_cols*(grid_rows-1).  Parking spot counts
    are drawn uniformly from 3..16 per street, deterministically for a fixed
    seed.
    """
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {grid_rows}x{grid_cols}")
    if street_length <= 0:
        raise ValueError(f"street_length must be > 0, got {street_length}")
    rng = random.Random(seed)
    streets: list[Street] = []
    sid = 0
    for r in range(grid_rows):
        for c in range(grid_cols):
            here = (float(c * street_length), float(r * street_length))
            if c + 1 < grid_cols:
                east = (float((c + 1) * street_length), float(r * street_length))
                streets.append(Street(sid, float(street_length), (here, east),
                                      rng.randint(3, 16)))
                sid += 1
            if r + 1 < grid_rows:
                south = (float(c * street_length), float((r + 1) * street_length))
                streets.append(Street(sid, float(street_length), (here, south),
                                      rng.randint(3, 16)))
                sid += 1
    return StreetNetwork.from_streets(streets)


def generate_routes(network: StreetNetwork, route_count: int, route_length: int,
                    seed: int, max_retries: int = 400) -> tuple[BusRoute, ...]:
    """Generate routes as self-avoiding random walks over the street graph.

    Each route is a trail of ``route_length`` distinct streets where
    consecutive streets share an endpoint.  When endpoint geometry is
    available the walk tracks its travelling direction (enter one end, leave
    the other); otherwise it walks the street adjacency directly.  A walk
    that dead-ends restarts from scratch, up to ``max_retries`` attempts per
    route.
    """
    if route_length < 1:
        raise ValueError(f"route_length must be >= 1, got {route_length}")
    if not network.streets:
        raise ValueError("network has no streets")
    rng = random.Random(seed)
    street_ids = sorted(network.street_ids)
    by_id = network.by_id()
    have_geometry = all(s.endpoints is not None for s in network.streets)
    incidence = network.endpoint_incidence() if have_geometry else None

    routes: list[BusRoute] = []
    for idx in range(route_count):
        path = None
        for _ in range(max_retries):
            start = by_id[rng.choice(street_ids)]
            walk = [start.id]
            used = {start.id}
            if have_geometry:
                head = start.endpoints[rng.randrange(2)]
                while len(walk) < route_length:
                    options = sorted(incidence.get(head, frozenset()) - used)
                    if not options:
                        break
                    nxt = by_id[rng.choice(options)]
                    walk.append(nxt.id)
                    used.add(nxt.id)
                    a, b = nxt.endpoints
                    head = b if a == head else a
            else:
                cur = start.id
                while len(walk) < route_length:
                    options = sorted(network.adjacency.get(cur, frozenset()) - used)
                    if not options:
                        break
                    cur = rng.choice(options)
                    walk.append(cur)
                    used.add(cur)
            if len(walk) == route_length:
                path = tuple(walk)
                break
        if path is None:
            raise RouteGenerationError(
                f"route {idx}: no self-avoiding walk of {route_length} streets found "
                f"after {max_retries} restarts", route_index=idx)
        routes.append(BusRoute(idx, path))
    return tuple(routes)


def expand_trips(routes: Sequence[BusRoute], trips_per_route: int, headway: float,
                 first_departure: float, speed: float) -> tuple[BusTrip, ...]:
    """Instantiate timed trips for each route.

    Per route, trips depart at first_departure + k*headway for
    k = 0..trips_per_route-1, all at the same cruising speed.
    """
    if trips_per_route < 1:
        raise ValueError(f"trips_per_route must be >= 1, got {trips_per_route}")
    if headway < 0:
        raise ValueError(f"headway must be >= 0, got {headway}")
    trips: list[BusTrip] = []
    tid = 0
    for route in routes:
        for k in range(trips_per_route):
            trips.append(BusTrip(tid, route.id, float(first_departure + k * headway),
                                 float(speed)))
            tid += 1
    return tuple(trips)


# --- scenario file I/O ------------------------------------------------------

def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ScenarioFormatError(f"{path}: missing required field '{key}'", field=f"{path}.{key}")
    val = obj[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ScenarioFormatError(f"{path}.{key}: expected a number, got {val!r}",
                                      field=f"{path}.{key}")
        return float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is int:
        raise ScenarioFormatError(f"{path}.{key}: expected {kind.__name__}, got {val!r}",
                                  field=f"{path}.{key}")
    return val


def scenario_to_dict(scenario: CityScenario) -> dict:
    streets = []
    for s in scenario.network.streets:
        entry = {"id": s.id, "length_m": s.length_m, "spots": s.spots}
        if s.endpoints is not None:
            entry["endpoints"] = [list(s.endpoints[0]), list(s.endpoints[1])]
        streets.append(entry)
    return {
        "streets": streets,
        "routes": [{"id": r.id, "path": list(r.path)} for r in scenario.routes],
        "trips": [{"id": t.id, "route_id": t.route_id, "departure_min": t.departure_min,
                   "speed_kmh": t.speed_kmh} for t in scenario.trips],
        "active_period": {"start_min": scenario.active_start, "end_min": scenario.active_end},
        "T_min": scenario.refresh_min,
    }


def save_scenario(scenario: CityScenario, path) -> None:
    """Write a scenario file; byte-identical for identical scenarios."""
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> CityScenario:
    """Load and fully validate a scenario file.

    Schema violations raise ScenarioFormatError naming the offending field;
    dangling references raise IntegrityError listing every offender.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ScenarioFormatError(f"{path}: top level must be an object")
    for key in ("streets", "routes", "trips"):
        if key not in raw or not isinstance(raw[key], list):
            raise ScenarioFormatError(f"{path}: missing or non-array top-level '{key}'",
                                      field=key)

    streets = []
    for i, entry in enumerate(raw["streets"]):
        p = f"streets[{i}]"
        sid = _require(entry, "id", int, p)
        length = _require(entry, "length_m", float, p)
        spots = _require(entry, "spots", int, p)
        endpoints = None
        if "endpoints" in entry:
            ep = entry["endpoints"]
            ok = (isinstance(ep, list) and len(ep) == 2
                  and all(isinstance(e, list) and len(e) == 2
                          and all(isinstance(v, (int, float)) for v in e) for e in ep))
            if not ok:
                raise ScenarioFormatError(f"{p}.endpoints: expected [[x,y],[x,y]]",
                                          field=f"{p}.endpoints")
            endpoints = ((float(ep[0][0]), float(ep[0][1])),
                         (float(ep[1][0]), float(ep[1][1])))
        try:
            streets.append(Street(sid, length, endpoints, spots))
        except ValueError as exc:
            raise ScenarioFormatError(f"{p}: {exc}", field=p) from exc

    routes = []
    for i, entry in enumerate(raw["routes"]):
        p = f"routes[{i}]"
        rid = _require(entry, "id", int, p)
        route_path = _require(entry, "path", list, p)
        if not route_path or not all(isinstance(v, int) for v in route_path):
            raise ScenarioFormatError(f"{p}.path: expected a non-empty array of street ids",
                                      field=f"{p}.path")
        routes.append(BusRoute(rid, tuple(route_path)))

    trips = []
    for i, entry in enumerate(raw["trips"]):
        p = f"trips[{i}]"
        try:
            trips.append(BusTrip(_require(entry, "id", int, p),
                                 _require(entry, "route_id", int, p),
                                 _require(entry, "departure_min", float, p),
                                 _require(entry, "speed_kmh", float, p)))
        except ValueError as exc:
            raise ScenarioFormatError(f"{p}: {exc}", field=p) from exc

    period = raw.get("active_period")
    if not isinstance(period, dict):
        raise ScenarioFormatError(f"{path}: missing 'active_period' object",
                                  field="active_period")
    start = _require(period, "start_min", float, "active_period")
    end = _require(period, "end_min", float, "active_period")
    refresh = _require(raw, "T_min", float, "<top>")

    # Streets with full geometry get endpoint-derived adjacency; without
    # geometry the routes themselves define which streets touch.
    have_geometry = streets and all(s.endpoints is not None for s in streets)
    extra = []
    if not have_geometry:
        for r in routes:
            extra.extend(zip(r.path, r.path[1:]))
        known = {s.id for s in streets}
        dangling = [f"route {r.id} references missing streets "
                    f"{[sid for sid in r.path if sid not in known]}"
                    for r in routes if any(sid not in known for sid in r.path)]
        if dangling:
            raise IntegrityError("dangling references: " + "; ".join(dangling),
                                 offenders=dangling)
    network = StreetNetwork.from_streets(streets, extra_pairs=extra)
    try:
        return CityScenario(network, tuple(routes), tuple(trips), start, end, refresh)
    except ValueError as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from exc


# --- active period detection ------------------------------------------------

def detect_active_period(change_series: Sequence[tuple[float, float]],
                         threshold_fraction: float = 0.25) -> tuple[float, float]:
    """Find the daily high-activity window from an average parking-change series.

    Returns the smallest window [start, end] containing every sample whose
    value is at least threshold_fraction * max(series).  The threshold is
    relative to the peak so the rule is scale-free.
    """
    if not change_series:
        raise ValueError("change series is empty")
    if not 0 < threshold_fraction < 1:
        raise ValueError(f"threshold_fraction must be in (0,1), got {threshold_fraction}")
    minutes = [m for m, _ in change_series]
    if any(b < a for a, b in zip(minutes, minutes[1:])):
        raise ValueError("change series must be sorted by minute of day")
    peak = max(v for _, v in change_series)
    if peak <= 0:
        raise NoActivePeriodError("no positive parking activity in the series")
    cutoff = threshold_fraction * peak
    qualifying = [m for m, v in change_series if v >= cutoff]
    return (qualifying[0], qualifying[-1])


def read_change_series(path) -> list[tuple[float, float]]:
    """Read a two-column (minute_of_day, avg_changes) CSV; header optional."""
    series: list[tuple[float, float]] = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ScenarioFormatError(f"{path}: line {i + 1}: expected two columns")
            try:
                series.append((float(row[0]), float(row[1])))
            except ValueError:
                if i == 0:
                    continue  # header row
                raise ScenarioFormatError(
                    f"{path}: line {i + 1}: non-numeric value {row!r}") from None
    return series
