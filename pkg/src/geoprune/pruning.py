"""GeoPrune: candidate pruning with detour ellipses and waiting circles.

Three R-trees back the engine:

* ``t_seg``: MBRs of the detour ellipse of every live segment of every
  non-empty vehicle, keyed ``(vehicle, k)`` where ``k`` is the segment index
  at the vehicle's last schedule rebuild;
* ``t_end``: the ending stop of every non-empty vehicle;
* ``t_ev``: the location of every empty vehicle.

Ellipses are only rebuilt on a match.  As a vehicle drives, the entries of
its not-yet-finished segments keep their old foci and arrival times.  This
stays conservative: if the vehicle has moved from ``p0`` to ``l`` along a
shortest path, then ``|p0 x| <= |p0 l| + |l x|`` and ``|p0 l|`` is at most the
distance driven, so any point reachable from ``l`` within the remaining
budget is still inside the ellipse built from ``p0``.  The same triangle
argument makes refinement against the stored arrival times a necessary
condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .geometry import MBR, DetourEllipse, WaitingCircle
from .network import NetworkPosition, RoadNetwork, TravelTimeProvider
from .rtree import RTree
from .schedule import TripRequest, TripSchedule, Vehicle, max_allowed_travel_time

# Float guards.  Geometric bounds grow by GEOM_TOL meters and time checks
# accept TIME_TOL seconds of overshoot; both only ever add candidates.
GEOM_TOL = 1e-6
TIME_TOL = 1e-6


class IndexCorruption(RuntimeError):
    """The index no longer mirrors the fleet."""


def segment_ellipse(schedule: TripSchedule, k: int, network: RoadNetwork, speed: float,
                    pad: float = 0.0) -> DetourEllipse:
    """Detour ellipse of segment ``(p[k-1], p[k])``: foci at the stops,
    major axis = maximum allowed travel time x ``speed`` (+ ``pad``)."""
    tail = schedule.origin if k == 1 else schedule.stops[k - 2].position
    head = schedule.stops[k - 1].position
    a, b = network.coords(tail), network.coords(head)
    major = max_allowed_travel_time(schedule, k) * speed + pad
    # a slow transforming speed can shrink the budget below the chord; keep the chord
    return DetourEllipse(a, b, max(major, math.dist(a, b)))


def waiting_circle(request: TripRequest, network: RoadNetwork, speed: float, pad: float = 0.0) -> WaitingCircle:
    return WaitingCircle(network.coords(request.s), request.w * speed + pad)


def request_ellipse(request: TripRequest, network: RoadNetwork, speed: float,
                    pad: float = 0.0) -> DetourEllipse | None:
    """Detour ellipse of the request; ``None`` when it would be empty."""
    s, e = network.coords(request.s), network.coords(request.e)
    major = request.max_travel_time * speed + pad
    if major < math.dist(s, e):
        return None
    return DetourEllipse(s, e, major)


@dataclass(frozen=True, slots=True)
class SegmentEntry:
    """Recorder snapshot of one segment, stored as the ``t_seg`` payload."""

    vehicle: int
    k: int
    ellipse: DetourEllipse
    tail: NetworkPosition
    head: NetworkPosition
    arr_prev: float
    arr: float
    slk: float
    ddl: float
    load: int
    capacity: int


@dataclass(frozen=True, slots=True)
class EndEntry:
    vehicle: int
    position: NetworkPosition
    arr: float
    capacity: int


@dataclass
class CandidateSet:
    """Pruning result.  ``s_slots``/``e_slots`` hold current slot numbers
    admitting the source/destination; ``m`` the vehicle's stop count."""

    F1: list[int] = field(default_factory=list)
    F2: list[int] = field(default_factory=list)
    F3: list[int] = field(default_factory=list)
    F: list[int] = field(default_factory=list)
    s_slots: dict[int, list[int]] = field(default_factory=dict)
    e_slots: dict[int, list[int]] = field(default_factory=dict)
    m: dict[int, int] = field(default_factory=dict)
    ops: int = 0

    def pairs(self, vid: int) -> list[tuple[int, int]]:
        """Slot pairs ``(i, j)`` consistent with the cases that admitted ``vid``."""
        m = self.m[vid]
        out: set[tuple[int, int]] = set()
        S = self.s_slots.get(vid, [])
        if vid in self._f1:
            E = self.e_slots.get(vid, [])
            out.update((i, j) for i in S for j in E if i <= j)
        if vid in self._f2:
            out.update((i, m + 1) for i in S)
        if vid in self._f3:
            out.add((m + 1, m + 1))
        return sorted(out)

    def __post_init__(self):
        self._f1, self._f2, self._f3 = set(self.F1), set(self.F2), set(self.F3)


class PruneState:
    """The three indexes plus per-vehicle bookkeeping.

    ``deadline_bound`` selects the bound used when refining an existing
    stop: ``"slack"`` (``arr[k] + slk[k]``, default) or ``"deadline"``
    (``ddl[k]``, looser).
    """

    def __init__(self, network: RoadNetwork, transform_speed: float, max_entries: int = 16,
                 deadline_bound: str = "slack"):
        if deadline_bound not in ("slack", "deadline"):
            raise ValueError("deadline_bound must be 'slack' or 'deadline'")
        self.network = network
        self.transform_speed = float(transform_speed)
        self.deadline_bound = deadline_bound
        self.t_seg = RTree(max_entries)
        self.t_end = RTree(max_entries)
        self.t_ev = RTree(max_entries)
        self._base: dict[int, int] = {}  # stops served since the vehicle's last rebuild
        self._m: dict[int, int] = {}  # stop count at the last rebuild
        self.refine_checks = 0
        self.last_match_touches = 0

    def add_empty(self, vehicle: Vehicle) -> None:
        x, y = self.network.coords(vehicle.location)
        self.t_ev.insert(vehicle.id, (x, y, x, y), vehicle.id)

    def current_m(self, vid: int) -> int:
        return self._m[vid] - self._base[vid]

    def touches(self) -> int:
        return self.t_seg.touches + self.t_end.touches + self.t_ev.touches

    def node_visits(self) -> int:
        return self.t_seg.node_visits + self.t_end.node_visits + self.t_ev.node_visits

    def check(self, fleet: Mapping[int, Vehicle]) -> None:
        """Raise :class:`IndexCorruption` unless the indexes mirror ``fleet``."""
        live = 0
        for vid, v in fleet.items():
            if v.is_empty:
                if vid not in self.t_ev or vid in self.t_end:
                    raise IndexCorruption(f"empty vehicle {vid} misfiled")
            else:
                if vid not in self.t_end or vid in self.t_ev:
                    raise IndexCorruption(f"busy vehicle {vid} misfiled")
                if self._base.get(vid) != v.served or self._m.get(vid) != v.schedule.m:
                    raise IndexCorruption(f"vehicle {vid} bookkeeping out of date")
                for k in range(v.served + 1, v.schedule.m + 1):
                    if (vid, k) not in self.t_seg:
                        raise IndexCorruption(f"segment {(vid, k)} missing")
                live += v.schedule.m - v.served
        if live != len(self.t_seg):
            raise IndexCorruption(f"t_seg holds {len(self.t_seg)} entries for {live} live segments")
        if len(self.t_end) + len(self.t_ev) != len(fleet):
            raise IndexCorruption("t_end and t_ev do not partition the fleet")


def refine_segment_for_stop(entry: SegmentEntry, stop: NetworkPosition, deadline: float,
                            eta: int | None, travel: TravelTimeProvider,
                            bound: str = "slack") -> bool:
    """Keep the segment for inserting ``stop`` unless time or capacity rules it out."""
    if eta is not None and entry.load + eta > entry.capacity:
        return False
    reach = entry.arr_prev + travel.time(entry.tail, stop)
    if reach > deadline + TIME_TOL:
        return False
    limit = entry.arr + entry.slk if bound == "slack" else entry.ddl
    return reach + travel.time(stop, entry.head) <= limit + TIME_TOL


def refine_ending_stop(entry: EndEntry, stop: NetworkPosition, deadline: float,
                       travel: TravelTimeProvider, eta: int | None = None) -> bool:
    """Keep the ending stop for appending ``stop`` if it can be reached in time."""
    if eta is not None and eta > entry.capacity:
        return False
    return entry.arr + travel.time(entry.position, stop) <= deadline + TIME_TOL


def prune(request: TripRequest, state: PruneState, travel: TravelTimeProvider,
          now: float | None = None) -> CandidateSet:
    """Non-empty vehicles that may feasibly serve ``request``."""
    net = state.network
    vt = state.transform_speed
    sx, sy = net.coords(request.s)
    ex, ey = net.coords(request.e)
    visits0 = state.node_visits()
    checks = 0
    bound = state.deadline_bound
    t_seg, t_end = state.t_seg, state.t_end
    base = state._base

    s_slots: dict[int, list[int]] = {}
    for key in t_seg.point_query(sx, sy):
        entry: SegmentEntry = t_seg.payload(key)
        checks += 1
        if not entry.ellipse.contains((sx, sy)):
            continue
        if refine_segment_for_stop(entry, request.s, request.lp, request.eta, travel, bound):
            s_slots.setdefault(entry.vehicle, []).append(entry.k - base[entry.vehicle])

    e_slots: dict[int, list[int]] = {}
    for key in t_seg.point_query(ex, ey):
        entry = t_seg.payload(key)
        checks += 1
        if not entry.ellipse.contains((ex, ey)):
            continue
        if refine_segment_for_stop(entry, request.e, request.ld, None, travel, bound):
            e_slots.setdefault(entry.vehicle, []).append(entry.k - base[entry.vehicle])

    wc = waiting_circle(request, net, vt, GEOM_TOL)
    o3 = set()
    for vid in t_end.range_query(wc.mbr().as_tuple()):
        entry: EndEntry = t_end.payload(vid)
        checks += 1
        if wc.contains(net.coords(entry.position)) and \
                refine_ending_stop(entry, request.s, request.lp, travel, request.eta):
            o3.add(vid)

    o4 = set()
    rd = request_ellipse(request, net, vt, GEOM_TOL)
    if rd is not None:
        for vid in t_end.range_query(rd.mbr().as_tuple()):
            entry = t_end.payload(vid)
            checks += 1
            if rd.contains(net.coords(entry.position)) and \
                    refine_ending_stop(entry, request.e, request.ld, travel):
                o4.add(vid)

    o1, o2 = set(s_slots), set(e_slots)
    f1 = sorted(o1 & o2)
    f2 = sorted(o1 & o4)
    f3 = sorted(o3)
    f = sorted(o1 & o2 | o1 & o4 | o3)
    state.refine_checks += checks
    cs = CandidateSet(
        F1=f1, F2=f2, F3=f3, F=f,
        s_slots={v: sorted(s) for v, s in s_slots.items()},
        e_slots={v: sorted(s) for v, s in e_slots.items()},
        m={v: state.current_m(v) for v in f},
        ops=state.node_visits() - visits0 + checks,
    )
    return cs


def prune_empty(request: TripRequest, state: PruneState) -> list[int]:
    """Empty vehicles inside the request's waiting circle."""
    net = state.network
    wc = waiting_circle(request, net, state.transform_speed, GEOM_TOL)
    out = []
    for vid in state.t_ev.range_query(wc.mbr().as_tuple()):
        b = state.t_ev.box(vid)
        if wc.contains((b[0], b[1])):
            out.append(vid)
    return sorted(out)


def _remove_vehicle(vehicle: Vehicle, state: PruneState) -> None:
    vid = vehicle.id
    if vehicle.is_empty:
        state.t_ev.delete(vid)
        return
    for k in range(state._base[vid] + 1, state._m[vid] + 1):
        state.t_seg.delete((vid, k))
    state.t_end.delete(vid)


def index_vehicle(vehicle: Vehicle, state: PruneState) -> None:
    """Insert the segments and ending stop of a freshly rebuilt schedule."""
    net = state.network
    sched = vehicle.schedule
    vid = vehicle.id
    vt = state.transform_speed
    for k in range(1, sched.m + 1):
        ellipse = segment_ellipse(sched, k, net, vt, GEOM_TOL)
        payload = SegmentEntry(
            vid, k, ellipse,
            sched.origin if k == 1 else sched.stops[k - 2].position,
            sched.stops[k - 1].position,
            sched.arr[k - 1], sched.arr[k], sched.slk[k], sched.ddl[k],
            sched.load[k], vehicle.capacity,
        )
        state.t_seg.insert((vid, k), ellipse.mbr().as_tuple(), payload)
    end = sched.stops[-1].position
    x, y = net.coords(end)
    state.t_end.insert(vid, (x, y, x, y), EndEntry(vid, end, sched.arr[-1], vehicle.capacity))
    state._base[vid] = 0
    state._m[vid] = sched.m


def match_update(vehicle: Vehicle, request: TripRequest, i: int, j: int, state: PruneState,
                 travel: TravelTimeProvider, now: float) -> TripSchedule:
    """Commit ``request`` to ``vehicle`` at slots ``(i, j)`` and refresh the indexes."""
    before = state.touches()
    _remove_vehicle(vehicle, state)
    sched = vehicle.assign(request, i, j, now, travel)
    index_vehicle(vehicle, state)
    state.last_match_touches = state.touches() - before
    return sched


def move_update(vehicle: Vehicle, state: PruneState, now: float | None = None) -> int:
    """Drop ellipses of segments the vehicle has finished; file it as empty at
    its final stop.  Returns the number of index entries touched."""
    vid = vehicle.id
    base = state._base.get(vid)
    if base is None:
        return 0
    before = state.touches()
    for k in range(base + 1, vehicle.served + 1):
        state.t_seg.delete((vid, k))
    state._base[vid] = vehicle.served
    if vehicle.is_empty:
        state.t_end.delete(vid)
        del state._base[vid]
        del state._m[vid]
        state.add_empty(vehicle)
    return state.touches() - before
