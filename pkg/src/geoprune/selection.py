"""Choosing the vehicle for a request among the pruning survivors.

Tie-breaks are fixed so that any two pruners that keep every feasible
vehicle reach the same decision:

* non-empty vehicles: smallest increase, then vehicle id, then ``(i, j)``;
* empty vehicles: smallest network time to the pickup, then vehicle id;
* empty vs non-empty at equal increase: the non-empty vehicle wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .network import TravelTimeProvider
from .pruning import TIME_TOL, CandidateSet, PruneState
from .schedule import TripRequest, Vehicle, best_insertion


@dataclass(frozen=True, slots=True)
class MatchDecision:
    """Outcome for one request; ``vehicle is None`` means rejected."""

    request_id: int
    vehicle: int | None = None
    i: int = 0
    j: int = 0
    increase: float = math.nan

    @property
    def assigned(self) -> bool:
        return self.vehicle is not None

    def log_line(self) -> str:
        if self.vehicle is None:
            return f"{self.request_id},rejected,,,,"
        return f"{self.request_id},assigned,{self.vehicle},{self.i},{self.j},{self.increase!r}"


@dataclass(frozen=True, slots=True)
class EmptyChoice:
    vehicle: int
    pickup_time: float
    increase: float


def _better(a: tuple, b: tuple | None) -> bool:
    return b is None or a < b


def select_best_nonempty(request: TripRequest, candidates: CandidateSet | Iterable[int],
                         fleet: Mapping[int, Vehicle], travel: TravelTimeProvider,
                         now: float | None = None) -> MatchDecision | None:
    """Cheapest valid insertion over the candidates.

    With a :class:`CandidateSet` only the slot pairs its cases admit are
    tried; a plain iterable of ids gets the full enumeration.
    """
    now = request.t if now is None else now
    restricted = isinstance(candidates, CandidateSet)
    ids = candidates.F if restricted else sorted(candidates)
    best: tuple | None = None
    for vid in ids:
        v = fleet[vid]
        if v.is_empty:
            continue
        pairs = candidates.pairs(vid) if restricted else None
        if pairs is not None and not pairs:
            continue
        snap = v.snapshot(now, travel)
        hit = best_insertion(snap, request, travel, v.capacity, pairs)
        if hit is None:
            continue
        key = (hit.increase, vid, hit.i, hit.j)
        if _better(key, best):
            best = key
    if best is None:
        return None
    return MatchDecision(request.id, best[1], best[2], best[3], best[0])


def _empty_verdict(request: TripRequest, v: Vehicle, travel: TravelTimeProvider,
                   now: float) -> EmptyChoice | None:
    snap = v.snapshot(now, travel)
    hit = best_insertion(snap, request, travel, v.capacity, [(1, 1)])
    if hit is None:
        return None
    return EmptyChoice(v.id, travel.time(v.location, request.s), hit.increase)


def best_empty(request: TripRequest, vehicle_ids: Iterable[int], fleet: Mapping[int, Vehicle],
               travel: TravelTimeProvider, now: float | None = None) -> EmptyChoice | None:
    """Exhaustive counterpart of :func:`nearest_empty_vehicle` over ``vehicle_ids``."""
    now = request.t if now is None else now
    best: EmptyChoice | None = None
    for vid in sorted(vehicle_ids):
        v = fleet[vid]
        if not v.is_empty:
            continue
        c = _empty_verdict(request, v, travel, now)
        if c is not None and (best is None or (c.pickup_time, c.vehicle) < (best.pickup_time, best.vehicle)):
            best = c
    return best


def nearest_empty_vehicle(request: TripRequest, state: PruneState, fleet: Mapping[int, Vehicle],
                          travel: TravelTimeProvider, now: float | None = None) -> EmptyChoice | None:
    """Network-nearest empty vehicle that can serve ``request`` (IER).

    Empty vehicles stream out of ``t_ev`` by Euclidean distance to the
    pickup.  Euclidean distance over the transforming speed bounds the
    network time from below, so the scan stops once that bound passes the
    best network time found, or passes the waiting time.
    """
    now = request.t if now is None else now
    sx, sy = state.network.coords(request.s)
    vt = state.transform_speed
    best: EmptyChoice | None = None
    for vid, d2 in state.t_ev.nearest_stream(sx, sy):
        bound = math.sqrt(d2) / vt
        if bound > request.w + TIME_TOL:
            break
        if best is not None and bound > best.pickup_time + TIME_TOL:
            break
        c = _empty_verdict(request, fleet[vid], travel, now)
        if c is not None and (best is None or (c.pickup_time, c.vehicle) < (best.pickup_time, best.vehicle)):
            best = c
    return best


def decide(request: TripRequest, nonempty: MatchDecision | None,
           empty: EmptyChoice | None) -> MatchDecision:
    """Pick the cheaper of the two stage winners, or reject."""
    if nonempty is not None and (empty is None or nonempty.increase <= empty.increase):
        return nonempty
    if empty is not None:
        return MatchDecision(request.id, empty.vehicle, 1, 1, empty.increase)
    return MatchDecision(request.id)
