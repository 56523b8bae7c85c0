"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--quick]

Times single-source Dijkstra on grid networks, the insertion scan on random
schedules, and one end-to-end simulation per backend (run in a subprocess so
the backend switch applies at import).
"""

from __future__ import annotations

import argparse
import os
import random
import subprocess
import sys
import timeit

from geoprune import kernels
from geoprune.network import RoadNetwork, TravelTimeProvider
from geoprune.schedule import Stop, TripRequest, build_schedule, insertion_inputs
from geoprune.simulator import grid_network

BACKENDS = [("python", kernels.python_backend), ("cython", kernels.compiled_backend)]


def best_of(fn, number: int, repeat: int = 3) -> float:
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_dijkstra(side: int, number: int) -> dict[str, float]:
    net = RoadNetwork(*grid_network(side, side))
    args = (net.csr_indptr, net.csr_heads, net.csr_weights, net.csr_edge_ids)
    return {name: best_of(lambda: mod.dijkstra(*args, 0), number) for name, mod in BACKENDS if mod}


def scan_case(m_requests: int, seed: int):
    rng = random.Random(seed)
    net = RoadNetwork(*grid_network(20, 20))
    travel = TravelTimeProvider(net, 10.0)
    stops: list[Stop] = []
    for rid in range(m_requests):
        s, e = rng.sample(range(400), 2)
        r = TripRequest.create(rid, 0.0, net.at_vertex(s), net.at_vertex(e), 3000.0, 2.0, 1, travel)
        i = rng.randrange(len(stops) + 1)
        stops.insert(i, Stop.pickup(r))
        stops.insert(rng.randrange(i + 1, len(stops) + 1), Stop.dropoff(r))
    sched = build_schedule(net.at_vertex(0), stops, 0.0, travel)
    s, e = rng.sample(range(400), 2)
    req = TripRequest.create(99, 0.0, net.at_vertex(s), net.at_vertex(e), 600.0, 0.5, 1, travel)
    to_s, s_to, to_e, e_to, delta = insertion_inputs(sched, req, travel)
    return (list(sched.legs), list(sched.ddl), delta, 0, 8, 1, to_s, s_to, to_e, e_to,
            travel.time(req.s, req.e), req.lp, req.ld, 0.0)


def bench_scan(m_requests: int, number: int) -> dict[str, float]:
    args = scan_case(m_requests, m_requests)
    return {name: best_of(lambda: mod.scan_insertions(*args), number) for name, mod in BACKENDS if mod}


def bench_simulation(quick: bool) -> dict[str, float]:
    out = {}
    size = "--grid 20x20 --requests 300" if quick else "--grid 40x40 --requests 1500"
    script = (
        "import sys, tempfile, time\n"
        "from geoprune.cli import main\n"
        "d = tempfile.mkdtemp()\n"
        f"main(['generate', *'{size}'.split(), '--out', d])\n"
        "t = time.perf_counter()\n"
        "main(['run', '--network', d + '/network.txt', '--requests', d + '/requests.csv',\n"
        "      '--vehicles', '150', '--out', d + '/run'])\n"
        "print(time.perf_counter() - t)\n"
    )
    for name, _ in BACKENDS:
        env = dict(os.environ)
        env.pop("GEOPRUNE_PURE_PYTHON", None)
        if name == "python":
            env["GEOPRUNE_PURE_PYTHON"] = "1"
        res = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip().splitlines()[-1])
    return out


def row(label: str, t: dict[str, float], unit: float, suffix: str) -> str:
    py, cy = t.get("python"), t.get("cython")
    speedup = f"{py / cy:6.1f}x" if py and cy else "   n/a"
    fmt = lambda v: f"{v * unit:10.2f}" if v is not None else "       n/a"
    return f"{label:<28}{fmt(py)}{fmt(cy)} {suffix:<4}{speedup}"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller sizes, fewer repetitions")
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the python backend is timed")
    reps = 1 if args.quick else 5
    print(f"{'kernel':<28}{'python':>10}{'cython':>10}      speedup")
    for side in (20, 50) if args.quick else (20, 50, 100):
        print(row(f"dijkstra {side}x{side} grid", bench_dijkstra(side, reps), 1e3, "ms"))
    for m in (1, 3, 6) if args.quick else (1, 3, 6, 10):
        print(row(f"scan, {2 * m} stops", bench_scan(m, 200 * reps), 1e6, "us"))
    print(row("simulation end to end", bench_simulation(args.quick), 1.0, "s"))


if __name__ == "__main__":
    main()
