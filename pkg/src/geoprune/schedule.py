"""Trip requests, vehicles and trip schedules with their arrival/deadline/slack recorder."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .network import NetworkPosition, RoadNetwork, TravelTimeProvider, project_lonlat

INF = math.inf


class RequestFormatError(ValueError):
    """Malformed request CSV."""


class StopKind(str, Enum):
    PICKUP = "pickup"
    DROPOFF = "dropoff"


@dataclass(frozen=True, slots=True)
class TripRequest:
    """A ride request: issue time, endpoints, waiting/detour limits and party size.

    ``lp`` and ``ld`` are the latest pickup and drop-off times.
    """

    id: int
    t: float
    s: NetworkPosition
    e: NetworkPosition
    w: float
    epsilon: float
    eta: int
    lp: float
    ld: float

    @classmethod
    def create(cls, id: int, t: float, s: NetworkPosition, e: NetworkPosition, w: float,
               epsilon: float, eta: int, travel: TravelTimeProvider) -> "TripRequest":
        if w < 0 or epsilon < 0 or eta < 1:
            raise ValueError("need w >= 0, epsilon >= 0 and eta >= 1")
        direct = travel.time(s, e)
        return cls(id, float(t), s, e, float(w), float(epsilon), int(eta),
                   t + w, t + w + direct * (1 + epsilon))

    @property
    def max_travel_time(self) -> float:
        return self.ld - self.t


@dataclass(frozen=True, slots=True)
class Stop:
    position: NetworkPosition
    kind: StopKind
    request: int
    deadline: float
    eta: int = 1

    @classmethod
    def pickup(cls, r: TripRequest) -> "Stop":
        return cls(r.s, StopKind.PICKUP, r.id, r.lp, r.eta)

    @classmethod
    def dropoff(cls, r: TripRequest) -> "Stop":
        return cls(r.e, StopKind.DROPOFF, r.id, r.ld, r.eta)

    @property
    def delta(self) -> int:
        return self.eta if self.kind is StopKind.PICKUP else -self.eta


@dataclass(frozen=True)
class TripSchedule:
    """Stops ``p1..pm`` after the implicit ``p0 = origin`` plus recorder arrays.

    All arrays are indexed ``0..m``.  ``legs[k]`` is the travel time of
    segment ``(p[k-1], p[k])``, ``load[k]`` the passengers aboard on it;
    index 0 holds ``legs[0] = 0``, ``arr[0] = now``, ``ddl[0] = inf`` and
    ``load[0]`` = passengers aboard at ``p0``.
    """

    origin: NetworkPosition
    stops: tuple[Stop, ...]
    legs: tuple[float, ...]
    arr: tuple[float, ...]
    ddl: tuple[float, ...]
    slk: tuple[float, ...]
    load: tuple[int, ...]
    order_ok: bool = True

    @property
    def m(self) -> int:
        return len(self.stops)

    @property
    def now(self) -> float:
        return self.arr[0]

    @property
    def onboard(self) -> int:
        return self.load[0]

    @property
    def is_empty(self) -> bool:
        return not self.stops

    @property
    def valid(self) -> bool:
        """Point-order and time constraints hold (capacity is checked separately)."""
        return self.order_ok and all(s >= 0 for s in self.slk[1:])

    @property
    def end_time(self) -> float:
        return self.arr[-1]

    @property
    def total_time(self) -> float:
        return self.arr[-1] - self.arr[0]

    def within_capacity(self, capacity: int) -> bool:
        return max(self.load) <= capacity


def onboard_from_stops(stops: Sequence[Stop]) -> int:
    """Passengers already aboard: drop-offs whose pickup is not in the list."""
    picked = {s.request for s in stops if s.kind is StopKind.PICKUP}
    return sum(s.eta for s in stops if s.kind is StopKind.DROPOFF and s.request not in picked)


def _order_ok(stops: Sequence[Stop]) -> bool:
    seen_pickup: set[int] = set()
    dropped: set[int] = set()
    for s in stops:
        if s.kind is StopKind.PICKUP:
            if s.request in seen_pickup or s.request in dropped:
                return False
            seen_pickup.add(s.request)
        else:
            if s.request in dropped:
                return False
            dropped.add(s.request)
    return seen_pickup <= dropped


def build_schedule(origin: NetworkPosition, stops: Sequence[Stop], now: float,
                   travel: TravelTimeProvider, legs: Sequence[float] | None = None,
                   onboard: int | None = None) -> TripSchedule:
    """Populate arr/ddl/slk/load for ``stops`` starting at ``origin`` at ``now``.

    ``legs`` may carry precomputed segment times (index 0 ignored).
    """
    stops = tuple(stops)
    m = len(stops)
    if legs is None:
        leg_list = [0.0]
        prev = origin
        for s in stops:
            leg_list.append(travel.time(prev, s.position))
            prev = s.position
    else:
        if len(legs) != m + 1:
            raise ValueError("legs must have m + 1 entries")
        leg_list = [0.0] + list(legs[1:])

    arr = [now]
    for k in range(1, m + 1):
        arr.append(arr[k - 1] + leg_list[k])
    ddl = [INF] + [s.deadline for s in stops]
    slk = [INF] * (m + 1)
    for k in range(m, 0, -1):
        here = ddl[k] - arr[k]
        slk[k] = here if k == m else min(here, slk[k + 1])
    if m:
        slk[0] = slk[1]
    start = onboard_from_stops(stops) if onboard is None else onboard
    load = [start]
    if m:
        load.append(start)
        for k in range(1, m):
            load.append(load[k] + stops[k - 1].delta)
    return TripSchedule(origin, stops, tuple(leg_list), tuple(arr), tuple(ddl), tuple(slk),
                        tuple(load), _order_ok(stops))


def recompute_recorder(schedule: TripSchedule, now: float, travel: TravelTimeProvider) -> TripSchedule:
    """Rebuild the recorder arrays of ``schedule`` from scratch, anchored at ``now``."""
    return build_schedule(schedule.origin, schedule.stops, now, travel, onboard=schedule.onboard)


def max_allowed_travel_time(schedule: TripSchedule, k: int) -> float:
    """``arr[k] - arr[k-1] + slk[k]`` for segment ``(p[k-1], p[k])``."""
    if not 1 <= k <= schedule.m:
        raise IndexError(f"segment {k} outside 1..{schedule.m}")
    return schedule.arr[k] - schedule.arr[k - 1] + schedule.slk[k]


def segment_occupancy(schedule: TripSchedule, k: int) -> int:
    if not 1 <= k <= schedule.m:
        raise IndexError(f"segment {k} outside 1..{schedule.m}")
    return schedule.load[k]


class Insertion(NamedTuple):
    i: int
    j: int
    increase: float
    n_valid: int


def insertion_inputs(schedule: TripSchedule, request: TripRequest, travel: TravelTimeProvider):
    """Travel times between the request endpoints and every stop of ``schedule``."""
    s, e = request.s, request.e
    positions = [schedule.origin] + [st.position for st in schedule.stops]
    time = travel.time
    to_s = [time(p, s) for p in positions]
    to_e = [time(p, e) for p in positions]
    s_to = travel.times_from(s, positions)
    s_to[0] = 0.0
    e_to = travel.times_from(e, positions)
    e_to[0] = 0.0
    delta = [0] + [st.delta for st in schedule.stops]
    return to_s, s_to, to_e, e_to, delta


def best_insertion(schedule: TripSchedule, request: TripRequest, travel: TravelTimeProvider,
                   capacity: int, pairs: Sequence[tuple[int, int]] | None = None) -> Insertion | None:
    """Cheapest valid way to add ``request`` to ``schedule``.

    ``pairs`` restricts the ``(i, j)`` slots tried (lexicographically sorted);
    by default all ``1 <= i <= j <= m + 1`` are enumerated.  Ties keep the
    lexicographically first pair.
    """
    if pairs is not None and not pairs:
        return None
    to_s, s_to, to_e, e_to, delta = insertion_inputs(schedule, request, travel)
    if pairs is None:
        pi = pj = None
    else:
        pi = [p[0] for p in pairs]
        pj = [p[1] for p in pairs]
    i, j, inc, n_valid = kernels.scan_insertions(
        schedule.legs, schedule.ddl, delta, schedule.onboard, capacity, request.eta,
        to_s, s_to, to_e, e_to, travel.time(request.s, request.e), request.lp, request.ld,
        schedule.now, pi, pj)
    if i == 0:
        return None
    return Insertion(int(i), int(j), float(inc), int(n_valid))


def evaluate_insertion(schedule: TripSchedule, request: TripRequest, i: int, j: int,
                       travel: TravelTimeProvider, capacity: int) -> float | None:
    """Travel-time increase of adding the request at slots ``(i, j)``, or ``None`` if invalid."""
    m = schedule.m
    if not 1 <= i <= j <= m + 1:
        raise ValueError(f"slots ({i}, {j}) outside 1 <= i <= j <= {m + 1}")
    hit = best_insertion(schedule, request, travel, capacity, [(i, j)])
    return None if hit is None else hit.increase


def insert_stops(stops: Sequence[Stop], request: TripRequest, i: int, j: int) -> tuple[Stop, ...]:
    """Stop list with the request's pickup before slot ``i`` and drop-off before slot ``j``."""
    stops = list(stops)
    head = stops[: i - 1]
    mid = stops[i - 1: j - 1]
    tail = stops[j - 1:]
    return tuple(head + [Stop.pickup(request)] + mid + [Stop.dropoff(request)] + tail)


@dataclass(eq=False)
class Vehicle:
    """A vehicle and the schedule it is driving.

    ``schedule`` is the recorder as of the last rebuild; ``served`` counts its
    stops already visited.  Between stops the vehicle drives ``path`` starting
    at time ``leg_start`` at constant ``speed``.
    """

    id: int
    location: NetworkPosition
    capacity: int
    speed: float
    schedule: TripSchedule | None = None
    served: int = 0
    onboard: int = 0
    path: list[NetworkPosition] = field(default_factory=list)
    leg_start: float = 0.0
    _memo: tuple | None = field(default=None, repr=False)

    @property
    def is_empty(self) -> bool:
        return self.schedule is None or self.served >= self.schedule.m

    @property
    def remaining_stops(self) -> tuple[Stop, ...]:
        if self.schedule is None:
            return ()
        return self.schedule.stops[self.served:]

    def position_at(self, t: float, network: RoadNetwork) -> NetworkPosition:
        if self.is_empty or len(self.path) < 2:
            return self.location
        driven = (t - self.leg_start) * self.speed
        if driven <= 0:
            return self.path[0]
        return network.advance_path(self.path, driven)[0]

    def snapshot(self, now: float, travel: TravelTimeProvider) -> TripSchedule:
        """Recorder for the remaining stops anchored at the position held at ``now``."""
        memo = self._memo
        if memo is not None and memo[0] == now and memo[1] is self.schedule and memo[2] == self.served \
                and memo[3] is travel and memo[5] is self.location and memo[6] == self.onboard:
            return memo[4]
        origin = self.position_at(now, travel.network)
        stops = self.remaining_stops
        if not stops:
            snap = build_schedule(origin, (), now, travel, onboard=self.onboard)
        else:
            legs = [0.0, travel.time(origin, stops[0].position)]
            legs.extend(self.schedule.legs[self.served + 2:])
            snap = build_schedule(origin, stops, now, travel, legs=legs, onboard=self.onboard)
        self._memo = (now, self.schedule, self.served, travel, snap, self.location, self.onboard)
        return snap

    def assign(self, request: TripRequest, i: int, j: int, now: float,
               travel: TravelTimeProvider) -> TripSchedule:
        """Insert ``request`` at slots ``(i, j)`` and rebuild the schedule from
        the current position."""
        snap = self.snapshot(now, travel)
        stops = insert_stops(snap.stops, request, i, j)
        sched = build_schedule(snap.origin, stops, now, travel, onboard=self.onboard)
        if not sched.valid or not sched.within_capacity(self.capacity):
            raise InvalidScheduleError(f"vehicle {self.id}: inserting request {request.id} "
                                       f"at ({i}, {j}) breaks the schedule")
        self.location = snap.origin
        self.schedule = sched
        self.served = 0
        self.path = travel.shortest_path(snap.origin, stops[0].position)
        self.leg_start = now
        return sched

    def next_arrival(self) -> float | None:
        """Scheduled arrival time at the next stop, if any."""
        if self.is_empty:
            return None
        return self.schedule.arr[self.served + 1]

    def reach_next_stop(self, travel: TravelTimeProvider) -> Stop:
        """Serve the next stop and head for the one after it."""
        stop = self.schedule.stops[self.served]
        self.served += 1
        self.onboard += stop.delta
        self.location = stop.position
        self.leg_start = self.schedule.arr[self.served]
        if self.served < self.schedule.m:
            self.path = travel.shortest_path(stop.position, self.schedule.stops[self.served].position)
        else:
            self.path = []
        return stop


class InvalidScheduleError(RuntimeError):
    """A committed insertion produced an invalid schedule."""


REQUEST_HEADER = ["id", "t_seconds", "s_vertex", "e_vertex", "w_seconds", "epsilon", "eta"]
_LONLAT_HEADER = ["id", "t_seconds", "s_lon", "s_lat", "e_lon", "e_lat", "w_seconds", "epsilon", "eta"]


def _nearest_vertex(network: RoadNetwork, x: float, y: float, allowed: np.ndarray | None) -> int:
    xs, ys = network.xs, network.ys
    if allowed is not None:
        d2 = (xs[allowed] - x) ** 2 + (ys[allowed] - y) ** 2
        return int(allowed[int(np.argmin(d2))])
    return int(np.argmin((xs - x) ** 2 + (ys - y) ** 2))


def load_requests(path: str | Path, network: RoadNetwork, travel: TravelTimeProvider,
                  lonlat_origin: tuple[float, float] | None = None,
                  snap_to: Sequence[int] | None = None) -> list[TripRequest]:
    """Read a request CSV.

    Vertex columns refer to the network's external vertex ids.  A lon/lat
    file is projected around ``lonlat_origin`` (the origin used for the
    network) and snapped to the nearest vertex, optionally among ``snap_to``.
    """
    allowed = None if snap_to is None else np.asarray(snap_to, dtype=np.int64)
    out: list[TripRequest] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RequestFormatError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if header == REQUEST_HEADER:
            lonlat = False
        elif header == _LONLAT_HEADER:
            if lonlat_origin is None:
                raise RequestFormatError(f"{path}: lon/lat requests need a projection origin")
            lonlat = True
        else:
            raise RequestFormatError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RequestFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rid, t = int(row[0]), float(row[1])
                if lonlat:
                    lon0, lat0 = lonlat_origin
                    sx, sy = project_lonlat(float(row[2]), float(row[3]), lon0, lat0)
                    ex, ey = project_lonlat(float(row[4]), float(row[5]), lon0, lat0)
                    s = network.at_vertex(_nearest_vertex(network, sx, sy, allowed))
                    e = network.at_vertex(_nearest_vertex(network, ex, ey, allowed))
                    rest = row[6:]
                else:
                    s = network.at_vertex(network.index(int(row[2])))
                    e = network.at_vertex(network.index(int(row[3])))
                    rest = row[4:]
                w, eps, eta = float(rest[0]), float(rest[1]), int(rest[2])
                out.append(TripRequest.create(rid, t, s, e, w, eps, eta, travel))
            except (ValueError, KeyError) as exc:
                raise RequestFormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_requests(path: str | Path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REQUEST_HEADER)
        writer.writerows(rows)
