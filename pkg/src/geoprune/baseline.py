"""GreedyGrids candidate retrieval and the brute-force feasibility oracle."""

from __future__ import annotations

import math
from typing import Iterable, Mapping

from .network import NetworkPosition, RoadNetwork, TravelTimeProvider
from .schedule import Insertion, TripRequest, Vehicle, best_insertion

Cell = tuple[int, int]


class GridIndex:
    """Uniform grid of square cells holding vehicle ids."""

    def __init__(self, cell: float = 1000.0):
        if not cell > 0:
            raise ValueError("cell length must be positive")
        self.cell = float(cell)
        self.cells: dict[Cell, set[int]] = {}
        self.where: dict[int, Cell] = {}

    def cell_of(self, x: float, y: float) -> Cell:
        return (math.floor(x / self.cell), math.floor(y / self.cell))

    def place(self, vid: int, x: float, y: float) -> bool:
        """File ``vid`` under the cell of ``(x, y)``; True if it changed cell."""
        c = self.cell_of(x, y)
        old = self.where.get(vid)
        if old == c:
            return False
        if old is not None:
            bucket = self.cells[old]
            bucket.discard(vid)
            if not bucket:
                del self.cells[old]
        self.cells.setdefault(c, set()).add(vid)
        self.where[vid] = c
        return True

    def remove(self, vid: int) -> None:
        c = self.where.pop(vid)
        bucket = self.cells[c]
        bucket.discard(vid)
        if not bucket:
            del self.cells[c]

    def window(self, minx: float, miny: float, maxx: float, maxy: float) -> list[int]:
        """Vehicle ids in cells intersecting the closed rectangle, ascending."""
        cx0, cy0 = self.cell_of(minx, miny)
        cx1, cy1 = self.cell_of(maxx, maxy)
        out: list[int] = []
        if (cx1 - cx0 + 1) * (cy1 - cy0 + 1) > len(self.cells):
            for (cx, cy), bucket in self.cells.items():
                if cx0 <= cx <= cx1 and cy0 <= cy <= cy1:
                    out.extend(bucket)
        else:
            for cx in range(cx0, cx1 + 1):
                for cy in range(cy0, cy1 + 1):
                    bucket = self.cells.get((cx, cy))
                    if bucket:
                        out.extend(bucket)
        out.sort()
        return out


def grid_track(vid: int, position: NetworkPosition, grid: GridIndex, network: RoadNetwork) -> bool:
    """Keep ``vid`` filed under the cell holding ``position``."""
    x, y = network.coords(position)
    return grid.place(vid, x, y)


def greedygrids_candidates(request: TripRequest, grid: GridIndex, network: RoadNetwork,
                           speed: float) -> list[int]:
    """All vehicles in cells touching the waiting circle's bounding box."""
    x, y = network.coords(request.s)
    r = request.w * speed
    return grid.window(x - r, y - r, x + r, y + r)


def oracle_feasible_set(request: TripRequest, fleet: Mapping[int, Vehicle] | Iterable[Vehicle],
                        travel: TravelTimeProvider, now: float | None = None) -> dict[int, Insertion]:
    """Best valid insertion of every vehicle that has one, by exhaustive enumeration."""
    now = request.t if now is None else now
    vehicles = fleet.values() if isinstance(fleet, Mapping) else fleet
    out: dict[int, Insertion] = {}
    for v in sorted(vehicles, key=lambda v: v.id):
        snap = v.snapshot(now, travel)
        hit = best_insertion(snap, request, travel, v.capacity)
        if hit is not None:
            out[v.id] = hit
    return out
