import math
import random

import pytest
from hypothesis import given, strategies as st

from geoprune.network import RoadNetwork, TravelTimeProvider
from geoprune.schedule import (INF, RequestFormatError, Stop, StopKind, TripRequest, Vehicle, best_insertion,
                               build_schedule, evaluate_insertion, insert_stops, load_requests,
                               max_allowed_travel_time, onboard_from_stops, recompute_recorder,
                               segment_occupancy, write_requests)

from conftest import make_grid

NINE_AM = 9 * 3600


def line_network(legs):
    xs = [0.0]
    for leg in legs:
        xs.append(xs[-1] + leg)
    verts = [(i, x, 0.0) for i, x in enumerate(xs)]
    edges = [(i, i + 1, legs[i]) for i in range(len(legs))]
    return RoadNetwork(verts, edges)


def worked_schedule():
    """Four stops, legs 3/5/10/8 minutes, deadlines 9:05/9:12/9:23/9:30."""
    legs = [180.0, 300.0, 600.0, 480.0]
    net = line_network(legs)
    travel = TravelTimeProvider(net, 1.0)
    deadlines = [NINE_AM + 300, NINE_AM + 720, NINE_AM + 1380, NINE_AM + 1800]
    kinds = [(StopKind.PICKUP, 1), (StopKind.PICKUP, 2), (StopKind.DROPOFF, 1), (StopKind.DROPOFF, 2)]
    stops = [Stop(net.at_vertex(k + 1), kind, rid, float(d)) for k, ((kind, rid), d) in enumerate(zip(kinds, deadlines))]
    sched = build_schedule(net.at_vertex(0), stops, float(NINE_AM), travel, onboard=0)
    return net, travel, sched


def test_worked_recorder_exact():
    _, travel, sched = worked_schedule()
    again = recompute_recorder(sched, float(NINE_AM), travel)
    for s in (sched, again):
        assert s.arr[1:] == (NINE_AM + 180, NINE_AM + 480, NINE_AM + 1080, NINE_AM + 1560)
        assert s.slk[1:] == (120, 240, 240, 240)
        assert s.valid


def test_worked_segment_budget():
    _, _, sched = worked_schedule()
    assert max_allowed_travel_time(sched, 3) == 840.0
    assert [max_allowed_travel_time(sched, k) for k in (1, 2, 4)] == [300.0, 540.0, 720.0]
    assert [segment_occupancy(sched, k) for k in range(1, 5)] == [0, 1, 2, 1]
    with pytest.raises(IndexError):
        max_allowed_travel_time(sched, 0)
    with pytest.raises(IndexError):
        segment_occupancy(sched, 5)


def test_late_schedule_invalid():
    net, travel, sched = worked_schedule()
    late = build_schedule(sched.origin, sched.stops, NINE_AM + 200.0, travel, onboard=0)
    assert late.slk[1] < 0 and not late.valid


def test_order_violation_invalid():
    net, travel, sched = worked_schedule()
    swapped = (sched.stops[2], sched.stops[1], sched.stops[0], sched.stops[3])
    bad = build_schedule(sched.origin, swapped, float(NINE_AM), travel)
    assert not bad.order_ok and not bad.valid


def test_onboard_inference():
    _, _, sched = worked_schedule()
    assert onboard_from_stops(sched.stops) == 0
    assert onboard_from_stops(sched.stops[1:]) == 1


def random_stops(rng, net, travel, now, n_req):
    """Stops of ``n_req`` requests in a random order with pickups first."""
    n = net.n_vertices
    reqs = []
    for rid in range(n_req):
        s, e = rng.sample(range(n), 2)
        r = TripRequest.create(rid, now, net.at_vertex(s), net.at_vertex(e), rng.uniform(60, 400), 0.5,
                               rng.randrange(1, 3), travel)
        reqs.append(r)
    seq = []
    for r in reqs:
        i = rng.randrange(len(seq) + 1)
        seq.insert(i, Stop.pickup(r))
        j = rng.randrange(i + 1, len(seq) + 1)
        seq.insert(j, Stop.dropoff(r))
    return seq


@given(st.integers(0, 10**9))
def test_recorder_matches_direct_definition(seed):
    rng = random.Random(seed)
    net = make_grid(5, 5)
    travel = TravelTimeProvider(net, 10.0)
    origin = net.at_vertex(rng.randrange(25))
    stops = random_stops(rng, net, travel, 100.0, rng.randrange(0, 4))
    sched = build_schedule(origin, stops, 100.0, travel)
    arr = [100.0]
    prev = origin
    for s in stops:
        arr.append(arr[-1] + travel.time(prev, s.position))
        prev = s.position
    assert list(sched.arr) == arr
    for k in range(1, len(stops) + 1):
        assert sched.slk[k] == min(stops[q - 1].deadline - arr[q] for q in range(k, len(stops) + 1))
    load = 0
    for k, s in enumerate(stops, start=1):
        assert sched.load[k] == load
        load += s.delta
    assert load == 0


def brute_force_best(sched, request, travel, capacity):
    """Every (i, j) by rebuilding the whole stop list; independent of the scan kernel."""
    m = sched.m
    old_end = sched.arr[-1]
    best = None
    for i in range(1, m + 2):
        for j in range(i, m + 2):
            stops = list(sched.stops)
            stops.insert(j - 1, Stop.dropoff(request))
            stops.insert(i - 1, Stop.pickup(request))
            t = sched.now
            prev = sched.origin
            load = sched.onboard
            ok = True
            for s in stops:
                t = t + travel.time(prev, s.position)
                prev = s.position
                load += s.delta
                if t > s.deadline or load > capacity:
                    ok = False
                    break
            if ok and (best is None or t - old_end < best[2]):
                best = (i, j, t - old_end)
    return best


@given(st.integers(0, 10**9), st.integers(1, 4))
def test_best_insertion_matches_brute_force(seed, capacity):
    rng = random.Random(seed)
    net = make_grid(5, 5)
    travel = TravelTimeProvider(net, 10.0)
    now = 50.0
    stops = random_stops(rng, net, travel, now, rng.randrange(0, 3))
    sched = build_schedule(net.at_vertex(rng.randrange(25)), stops, now, travel)
    if not sched.valid or not sched.within_capacity(capacity):
        return
    s, e = rng.sample(range(25), 2)
    r = TripRequest.create(99, now, net.at_vertex(s), net.at_vertex(e), rng.uniform(30, 300), 0.3,
                           rng.randrange(1, 3), travel)
    got = best_insertion(sched, r, travel, capacity)
    want = brute_force_best(sched, r, travel, capacity)
    if want is None:
        assert got is None
        return
    assert got is not None
    assert got.increase == pytest.approx(want[2], abs=1e-9)
    inc = evaluate_insertion(sched, r, got.i, got.j, travel, capacity)
    assert inc == got.increase
    rebuilt = build_schedule(sched.origin, insert_stops(sched.stops, r, got.i, got.j), now, travel)
    assert rebuilt.valid and rebuilt.within_capacity(capacity)
    assert rebuilt.arr[-1] - sched.arr[-1] == pytest.approx(got.increase, abs=1e-9)


def test_insert_stops_positions():
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 1.0)
    r = TripRequest.create(7, 0.0, net.at_vertex(0), net.at_vertex(8), 10.0, 0.1, 1, travel)
    a = Stop(net.at_vertex(1), StopKind.DROPOFF, 1, INF)
    b = Stop(net.at_vertex(2), StopKind.DROPOFF, 2, INF)
    out = insert_stops((a, b), r, 2, 3)
    assert [s.request for s in out] == [1, 7, 2, 7]
    out = insert_stops((a, b), r, 3, 3)
    assert [s.request for s in out] == [1, 2, 7, 7]
    with pytest.raises(ValueError):
        evaluate_insertion(build_schedule(net.at_vertex(0), (a, b), 0.0, travel), r, 3, 2, travel, 4)


def test_request_deadlines():
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 10.0)
    r = TripRequest.create(1, 100.0, net.at_vertex(0), net.at_vertex(8), 240.0, 0.2, 1, travel)
    assert r.lp == 340.0
    assert r.ld == pytest.approx(340.0 + 80.0 * 1.2)
    assert r.max_travel_time == r.ld - 100.0
    with pytest.raises(ValueError):
        TripRequest.create(1, 0.0, net.at_vertex(0), net.at_vertex(8), 240.0, 0.2, 0, travel)


def test_vehicle_movement_and_snapshot():
    net = make_grid(5, 5)
    travel = TravelTimeProvider(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    assert v.is_empty and v.snapshot(5.0, travel).m == 0
    r = TripRequest.create(1, 0.0, net.at_vertex(4), net.at_vertex(24), 300.0, 0.2, 1, travel)
    sched = v.assign(r, 1, 1, 0.0, travel)
    assert sched.arr[1:] == (80.0, 160.0)
    # halfway along the first leg the vehicle is on an edge
    snap = v.snapshot(30.0, travel)
    assert snap.origin.edge is not None or snap.origin.vertex is not None
    assert snap.arr[1] == pytest.approx(80.0, abs=1e-9)
    assert snap.arr[2] == pytest.approx(160.0, abs=1e-9)
    assert net.coords(v.position_at(30.0, net)) == pytest.approx((300.0, 0.0))
    assert v.next_arrival() == 80.0
    stop = v.reach_next_stop(travel)
    assert stop.kind is StopKind.PICKUP and v.onboard == 1 and v.location == net.at_vertex(4)
    stop = v.reach_next_stop(travel)
    assert v.is_empty and v.onboard == 0 and v.next_arrival() is None
    assert v.position_at(1000.0, net) == net.at_vertex(24)


def test_request_csv_roundtrip_and_errors(tmp_path):
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 10.0)
    p = tmp_path / "r.csv"
    write_requests(p, [(0, 5, 0, 8, 240.0, 0.2, 1), (1, 7, 8, 0, 120.0, 0.0, 2)])
    reqs = load_requests(p, net, travel)
    assert [r.id for r in reqs] == [0, 1] and reqs[1].eta == 2
    p.write_text("id,t_seconds,s_vertex,e_vertex,w_seconds,epsilon,eta\n0,5,0,99,240,0.2,1\n")
    with pytest.raises(RequestFormatError, match=":2:"):
        load_requests(p, net, travel)
    p.write_text("id,t\n")
    with pytest.raises(RequestFormatError, match="header"):
        load_requests(p, net, travel)
    p.write_text("id,t_seconds,s_vertex,e_vertex,w_seconds,epsilon,eta\n0,5,0,8,240,0.2\n")
    with pytest.raises(RequestFormatError, match="expected 7 fields"):
        load_requests(p, net, travel)


def test_lonlat_requests_snap(tmp_path):
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 10.0)
    p = tmp_path / "r.csv"
    p.write_text("id,t_seconds,s_lon,s_lat,e_lon,e_lat,w_seconds,epsilon,eta\n0,0,0.0,0.0,0.0036,0.0036,60,0.1,1\n")
    with pytest.raises(RequestFormatError):
        load_requests(p, net, travel)
    (r,) = load_requests(p, net, travel, lonlat_origin=(0.0, 0.0))
    assert r.s == net.at_vertex(0) and r.e == net.at_vertex(8)
