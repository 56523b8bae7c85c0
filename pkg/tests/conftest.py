import math
import os

import pytest
from hypothesis import HealthCheck, settings

from geoprune.network import RoadNetwork, TravelTimeProvider
from geoprune.simulator import grid_network

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def floyd_warshall(network: RoadNetwork) -> list[list[float]]:
    """All-pairs shortest distances, independent of the Dijkstra kernels."""
    n = network.n_vertices
    d = [[math.inf] * n for _ in range(n)]
    for v in range(n):
        d[v][v] = 0.0
    for e in range(network.n_edges):
        u, v, w = network.tail(e), network.head(e), network.edge_length(e)
        if w < d[u][v]:
            d[u][v] = w
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == math.inf:
                continue
            di = d[i]
            for j in range(n):
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    return d


def make_grid(nx=5, ny=5, spacing=200.0):
    verts, edges = grid_network(nx, ny, spacing)
    return RoadNetwork(verts, edges)


@pytest.fixture
def grid5():
    return make_grid(5, 5)


@pytest.fixture
def travel5(grid5):
    return TravelTimeProvider(grid5, 10.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
