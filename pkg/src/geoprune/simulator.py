"""Replay a request stream over a moving fleet.

Vehicles drive shortest paths at constant speed.  Movement is simulated
exactly by events: each vehicle has one pending "arrive at next stop" event
at the arrival time its schedule predicts.  Before a request issued at
``t`` is handled, every event up to and including ``t`` fires, so positions
are exact at request time regardless of the slot length.  The slot length
only buckets the move-update timings.
"""

from __future__ import annotations

import heapq
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import GridIndex, greedygrids_candidates, grid_track, oracle_feasible_set
from .network import (NetworkPosition, RoadNetwork, TravelTimeProvider, kmh_to_ms, load_network,
                      write_network)
from .pruning import TIME_TOL, PruneState, match_update, move_update, prune
from .schedule import StopKind, TripRequest, Vehicle, load_requests, write_requests
from .selection import (EmptyChoice, MatchDecision, best_empty, decide, nearest_empty_vehicle,
                        select_best_nonempty)

PRUNERS = ("geoprune", "greedygrids", "oracle")
REQUEST_CSV_HEADER = ["request_id", "candidates", "prune_us", "select_us", "outcome", "vehicle", "increase_s"]


class SimulationError(RuntimeError):
    """A run violated an invariant or the service audit."""


@dataclass
class SimulationConfig:
    n_vehicles: int = 100
    capacity: int = 4
    speed_kmh: float = 48.0
    transform_speed_kmh: float | None = None  # defaults to the vehicle speed
    slot_s: float = 1.0
    wait_s: float = 240.0
    detour_ratio: float = 0.2
    seed: int = 0
    pruner: str = "geoprune"
    verify_oracle: bool = False
    shadow_greedygrids: bool = False
    check_invariants: bool = False
    deadline_bound: str = "slack"
    grid_cell_m: float = 1000.0
    max_entries: int = 16
    network: str | None = None
    requests: str | None = None

    def __post_init__(self):
        if self.pruner not in PRUNERS:
            raise ValueError(f"pruner must be one of {PRUNERS}")
        if not self.slot_s > 0:
            raise ValueError("slot_s must be positive")
        if self.n_vehicles < 0 or self.capacity < 1:
            raise ValueError("need n_vehicles >= 0 and capacity >= 1")
        if not self.speed_kmh > 0:
            raise ValueError("speed_kmh must be positive")
        if self.transform_speed_kmh is not None and self.transform_speed_kmh < self.speed_kmh:
            warnings.warn("transforming speed below the vehicle speed: pruning may drop feasible vehicles",
                          RuntimeWarning, stacklevel=2)

    @property
    def speed(self) -> float:
        return kmh_to_ms(self.speed_kmh)

    @property
    def transform_speed(self) -> float:
        kmh = self.speed_kmh if self.transform_speed_kmh is None else self.transform_speed_kmh
        return kmh_to_ms(kmh)


@dataclass
class RequestRow:
    request_id: int
    candidates: int
    prune_us: float
    select_us: float
    outcome: str
    vehicle: int | None
    increase_s: float

    def csv_fields(self) -> list[str]:
        return [str(self.request_id), str(self.candidates), f"{self.prune_us:.3f}", f"{self.select_us:.3f}",
                self.outcome, "" if self.vehicle is None else str(self.vehicle),
                "" if self.vehicle is None else repr(self.increase_s)]


@dataclass
class MetricsRecord:
    rows: list[RequestRow] = field(default_factory=list)
    prune_ops: list[int] = field(default_factory=list)
    greedygrids_candidates: list[int] = field(default_factory=list)
    match_touches: list[tuple[int, int]] = field(default_factory=list)  # (entries touched, new m)
    tick_update_us: dict[int, float] = field(default_factory=dict)
    false_negatives: int = 0
    empty_mismatches: int = 0
    decision_mismatches: int = 0
    oracle_checked: int = 0
    served_pickups: int = 0
    served_dropoffs: int = 0
    audit_violations: list[str] = field(default_factory=list)
    dijkstra_runs: int = 0

    def summary(self) -> dict:
        n = len(self.rows)
        assigned = sum(1 for r in self.rows if r.outcome == "assigned")
        cands = np.array([r.candidates for r in self.rows], dtype=float)

        def stats(a: np.ndarray) -> dict:
            if a.size == 0:
                return {"mean": 0.0, "p50": 0.0, "p95": 0.0, "max": 0.0}
            return {"mean": float(a.mean()), "p50": float(np.percentile(a, 50)),
                    "p95": float(np.percentile(a, 95)), "max": float(a.max())}

        out = {
            "requests": n,
            "assigned": assigned,
            "served_ratio": assigned / n if n else 0.0,
            "candidates": stats(cands),
            "total_prune_s": sum(r.prune_us for r in self.rows) / 1e6,
            "total_select_s": sum(r.select_us for r in self.rows) / 1e6,
            "total_match_s": sum(r.prune_us + r.select_us for r in self.rows) / 1e6,
            "total_update_s": sum(self.tick_update_us.values()) / 1e6,
            "mean_prune_ops": float(np.mean(self.prune_ops)) if self.prune_ops else 0.0,
            "max_touch_ratio": max((t / (2 * (m + 1)) for t, m in self.match_touches), default=0.0),
            "false_negatives": self.false_negatives,
            "empty_mismatches": self.empty_mismatches,
            "decision_mismatches": self.decision_mismatches,
            "oracle_checked": self.oracle_checked,
            "served_pickups": self.served_pickups,
            "served_dropoffs": self.served_dropoffs,
            "audit_violations": len(self.audit_violations),
            "dijkstra_runs": self.dijkstra_runs,
        }
        if self.greedygrids_candidates:
            out["greedygrids_candidates"] = stats(np.array(self.greedygrids_candidates, dtype=float))
        return out


@dataclass
class SimulationResult:
    config: SimulationConfig
    metrics: MetricsRecord
    decisions: list[MatchDecision]
    trace: dict[int, list[tuple[float, NetworkPosition, str, int | None]]]

    def decision_log(self) -> str:
        return "".join(d.log_line() + "\n" for d in self.decisions)


def audit_service(trace: dict[int, list[tuple[float, NetworkPosition, str, int | None]]],
                  requests: dict[int, TripRequest], travel: TravelTimeProvider,
                  capacity: int, tol: float = TIME_TOL) -> list[str]:
    """Check a movement trace independently of the engine.

    Each trace entry is ``(time, position, kind, request_id)`` with kind
    ``start``, ``at`` (position when a new schedule was committed),
    ``pickup`` or ``dropoff``.  Consecutive entries must be reachable in the
    elapsed time; pickups and drop-offs must meet their deadlines, in order,
    without exceeding ``capacity``.
    """
    problems: list[str] = []
    picked: dict[int, float] = {}
    dropped: set[int] = set()
    for vid, events in trace.items():
        onboard = 0
        for (t0, p0, _, _), (t1, p1, _, _) in zip(events, events[1:]):
            if t1 - t0 < travel.time(p0, p1) - tol:
                problems.append(f"vehicle {vid}: {p0}->{p1} faster than possible at t={t1}")
        for t, _, kind, rid in events:
            if kind == "pickup":
                r = requests[rid]
                if rid in picked:
                    problems.append(f"request {rid} picked up twice")
                picked[rid] = t
                if t > r.lp + tol:
                    problems.append(f"request {rid} picked up at {t} after {r.lp}")
                onboard += r.eta
            elif kind == "dropoff":
                r = requests[rid]
                if rid not in picked or rid in dropped:
                    problems.append(f"request {rid} dropped without a pickup")
                dropped.add(rid)
                if t > r.ld + tol:
                    problems.append(f"request {rid} dropped off at {t} after {r.ld}")
                onboard -= r.eta
            if onboard > capacity or onboard < 0:
                problems.append(f"vehicle {vid}: onboard {onboard} at t={t}")
    for rid in picked:
        if rid not in dropped:
            problems.append(f"request {rid} never dropped off")
    return problems


def place_vehicles(network: RoadNetwork, config: SimulationConfig) -> list[Vehicle]:
    """Uniformly random start vertices from the largest strongly connected component."""
    rng = np.random.default_rng(config.seed)
    scc = network.largest_scc()
    if config.n_vehicles and not scc:
        raise ValueError("network has no vertices")
    picks = rng.choice(np.asarray(scc, dtype=np.int64), size=config.n_vehicles) if config.n_vehicles else []
    return [Vehicle(i, network.at_vertex(int(v)), config.capacity, config.speed) for i, v in enumerate(picks)]


def run(config: SimulationConfig, network: RoadNetwork | None = None,
        requests: Sequence[TripRequest] | None = None,
        travel: TravelTimeProvider | None = None) -> SimulationResult:
    """Process every request in issue-time order and drive the fleet to completion."""
    if network is None:
        if config.network is None:
            raise ValueError("no network given")
        network = load_network(config.network)
    if travel is None:
        travel = TravelTimeProvider(network, config.speed)
    if requests is None:
        if config.requests is None:
            raise ValueError("no requests given")
        requests = load_requests(config.requests, network, travel)
    requests = sorted(requests, key=lambda r: (r.t, r.id))
    by_id = {r.id: r for r in requests}
    if len(by_id) != len(requests):
        raise ValueError("duplicate request id")

    vehicles = place_vehicles(network, config)
    fleet = {v.id: v for v in vehicles}
    vt = config.transform_speed
    pruner = config.pruner

    state = PruneState(network, vt, config.max_entries, config.deadline_bound)
    if pruner == "geoprune":
        for v in vehicles:
            state.add_empty(v)
    use_grid = pruner == "greedygrids" or config.shadow_greedygrids
    grid = GridIndex(config.grid_cell_m) if use_grid else None
    if grid is not None:
        for v in vehicles:
            grid_track(v.id, v.location, grid, network)

    metrics = MetricsRecord()
    decisions: list[MatchDecision] = []
    trace = {v.id: [(0.0, v.location, "start", None)] for v in vehicles}
    events: list[tuple[float, int, int]] = []
    version = {v.id: 0 for v in vehicles}
    slot = config.slot_s
    clock = time.perf_counter_ns

    def flush(until: float) -> None:
        while events and events[0][0] <= until:
            t, vid, ver = heapq.heappop(events)
            if ver != version[vid]:
                continue
            v = fleet[vid]
            stop = v.reach_next_stop(travel)
            trace[vid].append((t, stop.position, stop.kind.value, stop.request))
            if stop.kind is StopKind.PICKUP:
                metrics.served_pickups += 1
            else:
                metrics.served_dropoffs += 1
            if v.onboard > v.capacity or v.onboard < 0:
                raise SimulationError(f"vehicle {vid}: onboard {v.onboard} at t={t}")
            if pruner == "geoprune":
                c0 = clock()
                move_update(v, state, t)
                bucket = int(math.floor(t / slot))
                metrics.tick_update_us[bucket] = metrics.tick_update_us.get(bucket, 0.0) + (clock() - c0) / 1e3
                if config.check_invariants:
                    state.check(fleet)
            if grid is not None and v.is_empty:
                grid_track(vid, v.location, grid, network)
            nxt = v.next_arrival()
            if nxt is not None:
                heapq.heappush(events, (nxt, vid, ver))

    def sync_grid(now: float) -> None:
        for v in vehicles:
            if not v.is_empty:
                grid_track(v.id, v.position_at(now, network), grid, network)

    for r in requests:
        now = r.t
        flush(now)
        if grid is not None:
            sync_grid(now)
        if not math.isfinite(r.ld):
            decisions.append(MatchDecision(r.id))
            metrics.rows.append(RequestRow(r.id, 0, 0.0, 0.0, "rejected", None, math.nan))
            continue

        feasible = None
        c0 = clock()
        if pruner == "geoprune":
            cs = prune(r, state, travel, now)
            n_cand = len(cs.F)
            c1 = clock()
            nonempty = select_best_nonempty(r, cs, fleet, travel, now)
            empty = nearest_empty_vehicle(r, state, fleet, travel, now)
            metrics.prune_ops.append(cs.ops)
            cand_ids = set(cs.F)
        elif pruner == "greedygrids":
            ids = greedygrids_candidates(r, grid, network, vt)
            busy = [vid for vid in ids if not fleet[vid].is_empty]
            n_cand = len(busy)
            c1 = clock()
            nonempty = select_best_nonempty(r, busy, fleet, travel, now)
            empty = best_empty(r, [vid for vid in ids if fleet[vid].is_empty], fleet, travel, now)
            cand_ids = set(busy)
        else:
            feasible = oracle_feasible_set(r, fleet, travel, now)
            n_cand = sum(1 for v in vehicles if not v.is_empty)
            c1 = clock()
            nonempty, empty = _oracle_choice(r, feasible, fleet, travel)
            cand_ids = {vid for vid in feasible if not fleet[vid].is_empty}
        decision = decide(r, nonempty, empty)
        c2 = clock()

        if config.shadow_greedygrids and pruner != "greedygrids":
            ids = greedygrids_candidates(r, grid, network, vt)
            metrics.greedygrids_candidates.append(sum(1 for vid in ids if not fleet[vid].is_empty))

        if config.verify_oracle:
            if feasible is None:
                feasible = oracle_feasible_set(r, fleet, travel, now)
            metrics.oracle_checked += 1
            missed = [vid for vid in feasible if not fleet[vid].is_empty and vid not in cand_ids]
            metrics.false_negatives += len(missed)
            o_nonempty, o_empty = _oracle_choice(r, feasible, fleet, travel)
            if (o_empty is None) != (empty is None) or (o_empty is not None and o_empty.vehicle != empty.vehicle):
                metrics.empty_mismatches += 1
            if decide(r, o_nonempty, o_empty) != decision:
                metrics.decision_mismatches += 1

        if decision.assigned:
            v = fleet[decision.vehicle]
            if pruner == "geoprune":
                match_update(v, r, decision.i, decision.j, state, travel, now)
                metrics.match_touches.append((state.last_match_touches, v.schedule.m))
                if config.check_invariants:
                    state.check(fleet)
            else:
                v.assign(r, decision.i, decision.j, now, travel)
            trace[v.id].append((now, v.location, "at", None))
            version[v.id] += 1
            heapq.heappush(events, (v.next_arrival(), v.id, version[v.id]))
        decisions.append(decision)
        metrics.rows.append(RequestRow(
            r.id, n_cand, (c1 - c0) / 1e3, (c2 - c1) / 1e3,
            "assigned" if decision.assigned else "rejected", decision.vehicle, decision.increase))

    flush(math.inf)
    metrics.dijkstra_runs = travel.dijkstra_runs
    metrics.audit_violations = audit_service(trace, by_id, travel, config.capacity)
    return SimulationResult(config, metrics, decisions, trace)


def _oracle_choice(r: TripRequest, feasible: dict, fleet: dict[int, Vehicle],
                   travel: TravelTimeProvider) -> tuple[MatchDecision | None, EmptyChoice | None]:
    nonempty = None
    best_key = None
    empty = None
    for vid, hit in feasible.items():
        v = fleet[vid]
        if v.is_empty:
            c = EmptyChoice(vid, travel.time(v.location, r.s), hit.increase)
            if empty is None or (c.pickup_time, vid) < (empty.pickup_time, empty.vehicle):
                empty = c
        else:
            key = (hit.increase, vid, hit.i, hit.j)
            if best_key is None or key < best_key:
                best_key = key
    if best_key is not None:
        nonempty = MatchDecision(r.id, best_key[1], best_key[2], best_key[3], best_key[0])
    return nonempty, empty


def grid_network(nx: int, ny: int, spacing: float = 200.0):
    """Vertices and bidirectional edges of an ``nx`` by ``ny`` street grid."""
    if nx < 2 or ny < 2:
        raise ValueError("grid dimensions must be at least 2x2")
    vertices = [(y * nx + x, x * spacing, y * spacing) for y in range(ny) for x in range(nx)]
    edges = []
    for y in range(ny):
        for x in range(nx):
            v = y * nx + x
            if x + 1 < nx:
                edges += [(v, v + 1, spacing), (v + 1, v, spacing)]
            if y + 1 < ny:
                edges += [(v, v + nx, spacing), (v + nx, v, spacing)]
    return vertices, edges


def generate_synthetic(seed: int, dims: tuple[int, int], n_requests: int, horizon: float,
                       network_path: str | Path | None = None, requests_path: str | Path | None = None,
                       *, spacing: float = 200.0, wait_s: float = 240.0, detour_ratio: float = 0.2,
                       max_eta: int = 1):
    """Grid network plus uniformly random requests.

    Issue times are whole seconds in ``[0, horizon)``; endpoints are distinct
    vertices; party sizes are uniform in ``1..max_eta``.  Returns
    ``(vertices, edges, request_rows)`` and writes the files when paths are given.
    """
    nx, ny = dims
    vertices, edges = grid_network(nx, ny, spacing)
    if n_requests < 0 or not horizon > 0 or max_eta < 1:
        raise ValueError("need n_requests >= 0, horizon > 0 and max_eta >= 1")
    rng = np.random.default_rng(seed)
    n = nx * ny
    times = np.sort(rng.integers(0, int(math.ceil(horizon)), size=n_requests))
    rows = []
    for k in range(n_requests):
        s = int(rng.integers(0, n))
        e = int(rng.integers(0, n - 1))
        if e >= s:
            e += 1
        eta = int(rng.integers(1, max_eta + 1))
        rows.append((k, int(times[k]), s, e, wait_s, detour_ratio, eta))
    if network_path is not None:
        write_network(network_path, vertices, edges)
    if requests_path is not None:
        write_requests(requests_path, rows)
    return vertices, edges, rows


def requests_from_rows(rows, network: RoadNetwork, travel: TravelTimeProvider) -> list[TripRequest]:
    """In-memory counterpart of :func:`load_requests` for generated rows."""
    return [TripRequest.create(rid, t, network.at_vertex(network.index(s)), network.at_vertex(network.index(e)),
                               w, eps, eta, travel) for rid, t, s, e, w, eps, eta in rows]
