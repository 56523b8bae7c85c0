import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from geoprune.baseline import oracle_feasible_set
from geoprune.geometry import ellipse_contains
from geoprune.network import TravelTimeProvider, kmh_to_ms
from geoprune.pruning import (GEOM_TOL, IndexCorruption, PruneState, SegmentEntry, index_vehicle, match_update,
                              move_update, prune, prune_empty, refine_ending_stop, refine_segment_for_stop,
                              request_ellipse, segment_ellipse)
from geoprune.schedule import TripRequest, Vehicle, best_insertion, evaluate_insertion
from geoprune.selection import select_best_nonempty
from geoprune.simulator import SimulationConfig, generate_synthetic, requests_from_rows, run

from conftest import make_grid
from test_schedule import NINE_AM, worked_schedule


class World:
    """A fleet driven through random assignments and movement, kept in sync with a PruneState."""

    def __init__(self, seed, n_vehicles=12, size=6, speed=10.0, transform=None, bound="slack"):
        self.rng = random.Random(seed)
        self.net = make_grid(size, size)
        self.travel = TravelTimeProvider(self.net, speed)
        self.state = PruneState(self.net, transform or speed, max_entries=4, deadline_bound=bound)
        n = self.net.n_vertices
        self.fleet = {i: Vehicle(i, self.net.at_vertex(self.rng.randrange(n)), 3, speed) for i in range(n_vehicles)}
        for v in self.fleet.values():
            self.state.add_empty(v)
        self.now = 0.0
        self.next_id = 0

    def request(self, w=None, eps=None):
        s, e = self.rng.sample(range(self.net.n_vertices), 2)
        r = TripRequest.create(self.next_id, self.now, self.net.at_vertex(s), self.net.at_vertex(e),
                               w if w is not None else self.rng.uniform(30, 200),
                               eps if eps is not None else self.rng.uniform(0.1, 1.0),
                               self.rng.randrange(1, 3), self.travel)
        self.next_id += 1
        return r

    def advance(self, dt):
        target = self.now + dt
        while True:
            due = [(v.next_arrival(), v.id) for v in self.fleet.values() if not v.is_empty]
            due = [d for d in due if d[0] <= target]
            if not due:
                break
            t, vid = min(due)
            v = self.fleet[vid]
            v.reach_next_stop(self.travel)
            move_update(v, self.state, t)
        self.now = target

    def assign_random(self):
        r = self.request()
        feas = oracle_feasible_set(r, self.fleet, self.travel, self.now)
        if feas:
            vid = self.rng.choice(sorted(feas))
            hit = feas[vid]
            match_update(self.fleet[vid], r, hit.i, hit.j, self.state, self.travel, self.now)

    def churn(self, steps=30):
        for _ in range(steps):
            self.assign_random()
            self.advance(self.rng.uniform(0, 40))
        self.state.check(self.fleet)


def test_empty_state_prunes_to_nothing():
    net = make_grid(4, 4)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    r = TripRequest.create(0, 0.0, net.at_vertex(0), net.at_vertex(15), 240.0, 0.2, 1, travel)
    cs = prune(r, state, travel, 0.0)
    assert cs.F == cs.F1 == cs.F2 == cs.F3 == []
    assert prune_empty(r, state) == []


@given(st.integers(0, 10**9))
@settings(max_examples=40)
def test_candidates_cover_feasible_vehicles(seed):
    world = World(seed)
    world.churn(25)
    for _ in range(8):
        r = world.request()
        cs = prune(r, world.state, world.travel, world.now)
        assert set(cs.F) == set(cs.F1) | set(cs.F2) | set(cs.F3)
        feas = oracle_feasible_set(r, world.fleet, world.travel, world.now)
        busy = {vid for vid in feas if not world.fleet[vid].is_empty}
        assert busy <= set(cs.F)
        # the admitted slot pairs keep the globally best insertion of each vehicle
        for vid in busy:
            snap = world.fleet[vid].snapshot(world.now, world.travel)
            restricted = best_insertion(snap, r, world.travel, 3, cs.pairs(vid))
            assert restricted is not None and restricted.increase == feas[vid].increase
        # discarded vehicles really are infeasible
        for vid, v in world.fleet.items():
            if not v.is_empty and vid not in cs.F:
                assert vid not in feas
        world.advance(world.rng.uniform(0, 30))


@given(st.integers(0, 10**9))
@settings(max_examples=25)
def test_restricted_selection_equals_fleet_wide(seed):
    world = World(seed, n_vehicles=15)
    world.churn(30)
    for _ in range(5):
        r = world.request()
        cs = prune(r, world.state, world.travel, world.now)
        busy = [vid for vid, v in world.fleet.items() if not v.is_empty]
        assert select_best_nonempty(r, cs, world.fleet, world.travel, world.now) == \
            select_best_nonempty(r, busy, world.fleet, world.travel, world.now)


@given(st.integers(0, 10**9))
@settings(max_examples=30)
def test_refinement_never_drops_a_valid_slot(seed):
    world = World(seed)
    world.churn(25)
    r = world.request()
    for vid, v in world.fleet.items():
        if v.is_empty:
            continue
        snap = v.snapshot(world.now, world.travel)
        m = snap.m
        base = v.served
        for i in range(1, m + 2):
            for j in range(i, m + 2):
                if evaluate_insertion(snap, r, i, j, world.travel, v.capacity) is None:
                    continue
                if i <= m:
                    entry = world.state.t_seg.payload((vid, base + i))
                    assert refine_segment_for_stop(entry, r.s, r.lp, r.eta, world.travel)
                    assert refine_segment_for_stop(entry, r.s, r.lp, r.eta, world.travel, "deadline")
                if j <= m:
                    entry = world.state.t_seg.payload((vid, base + j))
                    assert refine_segment_for_stop(entry, r.e, r.ld, None, world.travel)
                end = world.state.t_end.payload(vid)
                if i == m + 1:
                    assert refine_ending_stop(end, r.s, r.lp, world.travel, r.eta)
                if j == m + 1:
                    assert refine_ending_stop(end, r.e, r.ld, world.travel)


@given(st.integers(0, 10**9))
@settings(max_examples=20)
def test_deadline_bound_is_looser(seed):
    tight = World(seed, bound="slack")
    loose = World(seed, bound="deadline")
    tight.churn(25)
    loose.churn(25)
    for _ in range(5):
        r = tight.request()
        loose.next_id += 1
        a = prune(r, tight.state, tight.travel, tight.now)
        b = prune(r, loose.state, loose.travel, loose.now)
        assert set(a.F) <= set(b.F)


@given(st.integers(0, 10**9))
@settings(max_examples=20)
def test_faster_transform_speed_only_adds(seed):
    slow = World(seed, speed=10.0, transform=10.0)
    fast = World(seed, speed=10.0, transform=25.0)
    slow.churn(20)
    fast.churn(20)
    r = slow.request()
    assert set(prune(r, slow.state, slow.travel, slow.now).F) <= set(prune(r, fast.state, fast.travel, fast.now).F)


def test_refine_trivial_cases():
    net, travel, sched = worked_schedule()
    e = segment_ellipse(sched, 2, net, 1.0)
    entry = SegmentEntry(0, 2, e, sched.stops[0].position, sched.stops[1].position, sched.arr[1], sched.arr[2],
                         sched.slk[2], sched.ddl[2], sched.load[2], 4)
    # inserting at the segment's own tail costs nothing
    assert refine_segment_for_stop(entry, sched.stops[0].position, sched.arr[1], None, travel)
    assert not refine_segment_for_stop(entry, sched.stops[0].position, sched.arr[1] - 1.0, None, travel)
    assert not refine_segment_for_stop(entry, sched.stops[0].position, sched.arr[1], 4, travel)
    from geoprune.pruning import EndEntry
    end = EndEntry(0, sched.stops[-1].position, sched.arr[-1], 4)
    assert refine_ending_stop(end, sched.stops[-1].position, sched.arr[-1], travel)
    assert refine_ending_stop(end, sched.origin, math.inf, travel)
    assert not refine_ending_stop(end, sched.origin, math.inf, travel, eta=5)


def test_worked_vehicle_ellipses():
    net, travel, sched = worked_schedule()
    speed = kmh_to_ms(48)
    assert segment_ellipse(sched, 3, net, speed).major == 11200.0
    v = Vehicle(0, sched.origin, 4, 1.0, schedule=sched)
    state = PruneState(net, 1.0)
    index_vehicle(v, state)
    assert len(state.t_seg) == 4 and len(state.t_end) == 1
    assert state.t_seg.payload((0, 3)).ellipse.major == 840.0 + GEOM_TOL


def test_match_update_from_empty_counts():
    net = make_grid(4, 4)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    state.add_empty(v)
    r = TripRequest.create(0, 0.0, net.at_vertex(1), net.at_vertex(15), 240.0, 0.2, 1, travel)
    match_update(v, r, 1, 1, state, travel, 0.0)
    assert (len(state.t_ev), len(state.t_seg), len(state.t_end)) == (0, 2, 1)
    assert state.last_match_touches == 4
    state.check({0: v})


def test_move_update_lifecycle():
    net = make_grid(4, 4)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    state.add_empty(v)
    r = TripRequest.create(0, 0.0, net.at_vertex(1), net.at_vertex(15), 240.0, 0.2, 1, travel)
    match_update(v, r, 1, 1, state, travel, 0.0)
    assert move_update(v, state, 5.0) == 0
    v.reach_next_stop(travel)
    move_update(v, state, 20.0)
    assert (len(state.t_seg), len(state.t_end), len(state.t_ev)) == (1, 1, 0)
    state.check({0: v})
    v.reach_next_stop(travel)
    move_update(v, state, 120.0)
    assert (len(state.t_seg), len(state.t_end), len(state.t_ev)) == (0, 0, 1)
    state.check({0: v})
    assert state.t_ev.box(0)[:2] == net.coords(net.at_vertex(15))


def test_check_detects_corruption():
    net = make_grid(4, 4)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    state.add_empty(v)
    r = TripRequest.create(0, 0.0, net.at_vertex(1), net.at_vertex(15), 240.0, 0.2, 1, travel)
    match_update(v, r, 1, 1, state, travel, 0.0)
    state.t_seg.delete((0, 1))
    with pytest.raises(IndexCorruption):
        state.check({0: v})
    with pytest.raises(IndexCorruption):
        PruneState(net, 10.0).check({0: v})


def test_insert_append_case():
    # the vehicle drives 0 -> 4 along the bottom row; the new request starts
    # just above that row and ends near the vehicle's last stop
    net = make_grid(5, 5)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    state.add_empty(v)
    first = TripRequest.create(0, 0.0, net.at_vertex(1), net.at_vertex(4), 60.0, 1.0, 1, travel)
    match_update(v, first, 1, 1, state, travel, 0.0)
    r = TripRequest.create(1, 0.0, net.at_vertex(7), net.at_vertex(9), 120.0, 0.5, 1, travel)
    cs = prune(r, state, travel, 0.0)
    assert 0 in cs.F2
    assert all(j == cs.m[0] + 1 for _, j in cs.pairs(0) if (_, j) in {(i, cs.m[0] + 1) for i in cs.s_slots[0]})


def test_both_endpoints_in_one_segment():
    net = make_grid(5, 5)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(0, net.at_vertex(0), 4, 10.0)
    state.add_empty(v)
    first = TripRequest.create(0, 0.0, net.at_vertex(0), net.at_vertex(4), 10.0, 2.0, 1, travel)
    match_update(v, first, 1, 1, state, travel, 0.0)
    # source and destination lie on the pickup-to-dropoff segment
    r = TripRequest.create(1, 0.0, net.at_vertex(1), net.at_vertex(3), 60.0, 0.5, 1, travel)
    cs = prune(r, state, travel, 0.0)
    assert 0 in cs.F1
    assert (2, 2) in cs.pairs(0)
    hit = select_best_nonempty(r, cs, {0: v}, travel, 0.0)
    assert hit is not None and (hit.i, hit.j) == (2, 2) and hit.increase == 0.0


@given(st.integers(0, 10**9))
@settings(max_examples=30)
def test_prune_empty_matches_linear_scan(seed):
    world = World(seed, n_vehicles=25)
    world.churn(10)
    r = world.request()
    sx, sy = world.net.coords(r.s)
    radius = r.w * world.state.transform_speed
    expect = sorted(vid for vid, v in world.fleet.items()
                    if v.is_empty and math.dist(world.net.coords(v.location), (sx, sy)) <= radius)
    got = prune_empty(r, world.state)
    assert set(expect) <= set(got)
    for vid in set(got) - set(expect):
        d = math.dist(world.net.coords(world.fleet[vid].location), (sx, sy))
        assert d <= radius + GEOM_TOL


def test_empty_vehicle_at_source_included():
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 10.0)
    state = PruneState(net, 10.0)
    v = Vehicle(5, net.at_vertex(4), 4, 10.0)
    state.add_empty(v)
    r = TripRequest.create(0, 0.0, net.at_vertex(4), net.at_vertex(0), 0.0, 0.0, 1, travel)
    assert prune_empty(r, state) == [5]


def test_request_ellipse_shape():
    net = make_grid(3, 3)
    travel = TravelTimeProvider(net, 10.0)
    r = TripRequest.create(0, 0.0, net.at_vertex(0), net.at_vertex(2), 60.0, 0.5, 1, travel)
    rd = request_ellipse(r, net, 10.0)
    assert rd.major == pytest.approx((60.0 + 40.0 * 1.5) * 10.0)
    assert ellipse_contains(rd, net.coords(net.at_vertex(1)))
    assert request_ellipse(r, net, 4.0) is not None
    assert request_ellipse(r, net, 3.0) is None


@given(st.integers(0, 10**6))
@settings(max_examples=12)
def test_small_simulations_have_no_false_negatives(seed):
    verts_edges_rows = generate_synthetic(seed, (8, 8), 80, 600)
    from geoprune.network import RoadNetwork
    net = RoadNetwork(*verts_edges_rows[:2])
    travel = TravelTimeProvider(net, kmh_to_ms(48))
    reqs = requests_from_rows(verts_edges_rows[2], net, travel)
    cfg = SimulationConfig(n_vehicles=15, seed=seed, verify_oracle=True, check_invariants=True)
    res = run(cfg, net, reqs, travel)
    m = res.metrics
    assert m.false_negatives == 0 and m.decision_mismatches == 0 and m.empty_mismatches == 0
    assert m.audit_violations == []
    assert all(t <= 2 * (mm + 1) for t, mm in m.match_touches)
