import random

import pytest

from buscover import city, scp


def tiny_scenario(seed=3, rows=4, cols=4, n_routes=8, route_len=10, tpr=6,
                  headway=30, first_dep=360, speed=30, start=360, end=540,
                  refresh=60):
    """A small fully-coverable scenario used across test modules."""
    net = city.generate_grid_city(rows, cols, 500, seed)
    routes = city.generate_routes(net, n_routes, route_len, seed + 1)
    trips = city.expand_trips(routes, tpr, headway, first_dep, speed)
    return city.CityScenario(net, routes, trips, start, end, refresh)


def oracle_instance(seed):
    """Random instance small enough for brute force (n <= 15, m <= 40)."""
    rng = random.Random(seed)
    m = rng.randint(3, 40)
    n = rng.randint(3, 15)
    return scp.random_instance(m, n, seed=seed, min_row_nnz=1,
                               max_row_nnz=max(1, n // 2))


@pytest.fixture
def scenario():
    return tiny_scenario()
