"""Command-line entry point: ``geoprune {generate,run,compare}``.

Exit codes: 0 success, 1 invariant or audit failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__, kernels
from .network import NetworkFormatError, TravelTimeProvider, load_network
from .pruning import IndexCorruption
from .schedule import InvalidScheduleError, RequestFormatError, TripRequest, load_requests
from .simulator import REQUEST_CSV_HEADER, SimulationConfig, SimulationError, generate_synthetic, run

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

# config-file key -> (argparse dest, type)
_RUN_KEYS = {
    "network": str, "requests": str, "vehicles": int, "capacity": int, "speed_kmh": float,
    "transform_speed_kmh": float, "wait_s": float, "detour_ratio": float, "slot_s": float,
    "seed": int, "pruner": str, "verify_oracle": bool, "out": str, "shadow_greedygrids": bool,
    "check_invariants": bool, "deadline_bound": str,
}


class InputError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path: str | Path) -> dict:
    """Parse a ``key=value`` file; ``#`` starts a comment, dashes equal underscores."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        kind = _RUN_KEYS.get(key)
        if kind is None:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_bool(value) if kind is bool else kind(value)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    return out


def _grid_dims(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        dims = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 20x20, got {text!r}") from None
    if dims[0] < 2 or dims[1] < 2:
        raise argparse.ArgumentTypeError("grid dimensions must be at least 2x2")
    return dims


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoprune", description="Ride-sharing candidate pruning simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic grid network and request CSV")
    g.add_argument("--grid", type=_grid_dims, required=True, help="grid size, e.g. 20x20")
    g.add_argument("--requests", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon-s", type=float, default=3600.0)
    g.add_argument("--spacing-m", type=float, default=200.0)
    g.add_argument("--wait-s", type=float, default=240.0)
    g.add_argument("--detour-ratio", type=float, default=0.2)
    g.add_argument("--max-eta", type=int, default=1)
    g.add_argument("--out", default=".", help="output directory")

    r = sub.add_parser("run", help="simulate a request stream")
    r.add_argument("--config", help="key=value file; explicit flags win")
    r.add_argument("--network")
    r.add_argument("--requests")
    r.add_argument("--vehicles", type=int, default=100)
    r.add_argument("--capacity", type=int, default=4)
    r.add_argument("--speed-kmh", type=float, default=48.0)
    r.add_argument("--transform-speed-kmh", type=float, default=None)
    r.add_argument("--wait-s", type=float, default=None, help="override every request's waiting time")
    r.add_argument("--detour-ratio", type=float, default=None, help="override every request's detour ratio")
    r.add_argument("--slot-s", type=float, default=1.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--pruner", choices=["geoprune", "greedygrids", "oracle"], default="geoprune")
    r.add_argument("--verify-oracle", action="store_true", default=False)
    r.add_argument("--shadow-greedygrids", action="store_true", default=False)
    r.add_argument("--check-invariants", action="store_true", default=False)
    r.add_argument("--deadline-bound", choices=["slack", "deadline"], default="slack")
    r.add_argument("--out", default="run")

    c = sub.add_parser("compare", help="tabulate metrics of run directories")
    c.add_argument("runs", nargs="+")
    c.add_argument("--csv", help="also write the table as CSV")
    return p


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net_path, req_path = out / "network.txt", out / "requests.csv"
    generate_synthetic(args.seed, args.grid, args.requests, args.horizon_s, net_path, req_path,
                       spacing=args.spacing_m, wait_s=args.wait_s, detour_ratio=args.detour_ratio,
                       max_eta=args.max_eta)
    print(f"wrote {net_path} and {req_path}")
    return EXIT_OK


def _override(requests: list[TripRequest], travel, wait_s, detour_ratio) -> list[TripRequest]:
    if wait_s is None and detour_ratio is None:
        return requests
    return [TripRequest.create(r.id, r.t, r.s, r.e, r.w if wait_s is None else wait_s,
                               r.epsilon if detour_ratio is None else detour_ratio, r.eta, travel)
            for r in requests]


def cmd_run(args, argv: list[str]) -> int:
    if args.config:
        values = read_config(args.config)
        parser = build_parser()
        run_parser = parser._subparsers._group_actions[0].choices["run"]
        run_parser.set_defaults(**values)
        args = parser.parse_args(argv)
    if not args.network or not args.requests:
        raise InputError("--network and --requests are required")
    for path in (args.network, args.requests):
        if not Path(path).is_file():
            raise InputError(f"no such file: {path}")
    config = SimulationConfig(
        n_vehicles=args.vehicles, capacity=args.capacity, speed_kmh=args.speed_kmh,
        transform_speed_kmh=args.transform_speed_kmh, slot_s=args.slot_s,
        wait_s=240.0 if args.wait_s is None else args.wait_s,
        detour_ratio=0.2 if args.detour_ratio is None else args.detour_ratio,
        seed=args.seed, pruner=args.pruner, verify_oracle=args.verify_oracle,
        shadow_greedygrids=args.shadow_greedygrids, check_invariants=args.check_invariants,
        deadline_bound=args.deadline_bound, network=args.network, requests=args.requests)
    network = load_network(args.network)
    travel = TravelTimeProvider(network, config.speed)
    requests = load_requests(args.requests, network, travel)
    requests = _override(requests, travel, args.wait_s, args.detour_ratio)
    result = run(config, network, requests, travel)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = result.metrics.summary()
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "requests.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUEST_CSV_HEADER)
        for row in result.metrics.rows:
            w.writerow(row.csv_fields())
    (out / "decisions.log").write_text(result.decision_log(), encoding="utf-8")
    if result.metrics.audit_violations:
        (out / "audit.txt").write_text("\n".join(result.metrics.audit_violations) + "\n", encoding="utf-8")
    manifest = {
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed": config.seed,
        "config": {k: v for k, v in dataclasses.asdict(config).items()},
        "overrides": {"wait_s": args.wait_s, "detour_ratio": args.detour_ratio},
        "inputs": {"network": {"path": str(args.network), "sha256": _sha256(args.network)},
                   "requests": {"path": str(args.requests), "sha256": _sha256(args.requests)}},
        "outputs": ["metrics.json", "requests.csv", "decisions.log"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    print(f"{summary['requests']} requests, {summary['assigned']} assigned "
          f"(served ratio {summary['served_ratio']:.3f}), mean candidates {summary['candidates']['mean']:.2f}")
    failed = False
    if result.metrics.audit_violations:
        print(f"service audit: {len(result.metrics.audit_violations)} violations (see audit.txt)", file=sys.stderr)
        failed = True
    conforming = config.transform_speed >= config.speed
    if config.verify_oracle:
        m = result.metrics
        print(f"oracle: {m.false_negatives} false negatives, {m.decision_mismatches} decision mismatches "
              f"over {m.oracle_checked} requests")
        if conforming and (m.false_negatives or m.decision_mismatches or m.empty_mismatches):
            failed = True
    return EXIT_FAIL if failed else EXIT_OK


_COMPARE_COLUMNS = [
    ("mean_candidates", lambda s: s["candidates"]["mean"]),
    ("p95_candidates", lambda s: s["candidates"]["p95"]),
    ("total_match_s", lambda s: s["total_match_s"]),
    ("total_update_s", lambda s: s["total_update_s"]),
    ("served_ratio", lambda s: s["served_ratio"]),
]


def cmd_compare(args) -> int:
    loaded = []
    for d in args.runs:
        d = Path(d)
        try:
            manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
            summary = json.loads((d / "metrics.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{d}: not a run directory ({exc})") from None
        loaded.append((d, manifest, summary))
    ref = loaded[0][1]
    ref_key = (ref["inputs"]["network"]["sha256"], ref["inputs"]["requests"]["sha256"], ref["seed"])
    for d, manifest, _ in loaded[1:]:
        key = (manifest["inputs"]["network"]["sha256"], manifest["inputs"]["requests"]["sha256"], manifest["seed"])
        if key != ref_key:
            raise InputError(f"{d}: different inputs or seed than {loaded[0][0]}; refusing to compare")

    names = [f"{d.name}:{m['config']['pruner']}" for d, m, _ in loaded]
    rows = [[col] + [fn(s) for _, _, s in loaded] for col, fn in _COMPARE_COLUMNS]
    base = loaded[0][2]["candidates"]["mean"]
    factors = ["reduction_vs_first"] + [
        (base / s["candidates"]["mean"]) if s["candidates"]["mean"] > 0 else math.inf for _, _, s in loaded]
    rows.append(factors)

    width = max(len(n) for n in names + ["metric", "reduction_vs_first"]) + 2
    print("metric".ljust(width) + "".join(n.rjust(width) for n in names))
    for row in rows:
        print(row[0].ljust(width) + "".join(f"{v:.4g}".rjust(width) for v in row[1:]))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric"] + names)
            w.writerows([[row[0]] + [repr(float(v)) for v in row[1:]] for row in rows])
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "run":
            return cmd_run(args, argv)
        return cmd_compare(args)
    except (InputError, NetworkFormatError, RequestFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, IndexCorruption, InvalidScheduleError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
