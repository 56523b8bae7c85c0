"""Directed road network with planar coordinates and exact travel times."""

from __future__ import annotations

import math
import threading
from array import array
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels

EARTH_RADIUS_M = 6371008.8
# edge lengths may undershoot the chord by float noise when written as text
_LENGTH_SLACK = 1e-6


class NetworkFormatError(ValueError):
    """Malformed network input."""


class DisconnectedError(LookupError):
    """Destination is not reachable from the source."""


def kmh_to_ms(kmh: float) -> float:
    return kmh * 1000.0 / 3600.0


def project_lonlat(lon: float, lat: float, lon0: float, lat0: float) -> tuple[float, float]:
    """Equirectangular projection to local planar meters around ``(lon0, lat0)``."""
    x = EARTH_RADIUS_M * math.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return x, y


@dataclass(frozen=True, slots=True)
class NetworkPosition:
    """A point on the network: either a vertex or a spot inside an edge.

    Use :meth:`RoadNetwork.at_vertex` / :meth:`RoadNetwork.on_edge` to build
    canonical instances (offset 0 or full length collapses onto the vertex).
    """

    vertex: int | None = None
    edge: int | None = None
    offset: float = 0.0

    @property
    def is_vertex(self) -> bool:
        return self.edge is None


class RoadNetwork:
    """Directed graph with planar vertex coordinates (meters).

    Vertex ids given at construction are external labels; internally
    vertices are indexed ``0..n-1`` in the order supplied.
    """

    def __init__(self, vertices: Sequence[tuple[int, float, float]],
                 edges: Sequence[tuple[int, int, float]], *, check_lengths: bool = True):
        self.vertex_ids = [int(v[0]) for v in vertices]
        self._index = {vid: i for i, vid in enumerate(self.vertex_ids)}
        if len(self._index) != len(self.vertex_ids):
            raise NetworkFormatError("duplicate vertex id")
        self.xs = np.array([float(v[1]) for v in vertices], dtype=np.float64)
        self.ys = np.array([float(v[2]) for v in vertices], dtype=np.float64)

        tails, heads, lengths = [], [], []
        for k, (a, b, length) in enumerate(edges):
            if a not in self._index or b not in self._index:
                raise NetworkFormatError(f"edge {k} references unknown vertex")
            u, v, length = self._index[a], self._index[b], float(length)
            if not length >= 0.0 or math.isinf(length):
                raise NetworkFormatError(f"edge {k} has invalid length {length}")
            if check_lengths:
                chord = math.hypot(self.xs[u] - self.xs[v], self.ys[u] - self.ys[v])
                if length < chord - _LENGTH_SLACK * max(1.0, chord):
                    raise NetworkFormatError(
                        f"edge {k} length {length} is shorter than its chord {chord}")
            tails.append(u)
            heads.append(v)
            lengths.append(length)
        self.tails = np.array(tails, dtype=np.int64)
        self.heads = np.array(heads, dtype=np.int64)
        self.lengths = np.array(lengths, dtype=np.float64)
        self._tails_l = tails
        self._heads_l = heads
        self._lengths_l = lengths
        self._x_l = self.xs.tolist()
        self._y_l = self.ys.tolist()

        n = len(self.vertex_ids)
        order = np.argsort(self.tails, kind="stable")
        self.csr_indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.csr_indptr, self.tails + 1, 1)
        self.csr_indptr = np.cumsum(self.csr_indptr)
        self.csr_heads = self.heads[order]
        self.csr_weights = self.lengths[order]
        self.csr_edge_ids = order.astype(np.int64)

        self._edge_of: dict[tuple[int, int], int] = {}
        for e, (u, v, length) in enumerate(zip(tails, heads, lengths)):
            best = self._edge_of.get((u, v))
            if best is None or length < lengths[best]:
                self._edge_of[(u, v)] = e

    # -- construction helpers -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def n_edges(self) -> int:
        return len(self._tails_l)

    def index(self, vertex_id: int) -> int:
        try:
            return self._index[vertex_id]
        except KeyError:
            raise KeyError(f"unknown vertex id {vertex_id}") from None

    def at_vertex(self, v: int) -> NetworkPosition:
        """Position at internal vertex index ``v``."""
        if not 0 <= v < self.n_vertices:
            raise IndexError(v)
        return NetworkPosition(vertex=v)

    def on_edge(self, edge: int, offset: float) -> NetworkPosition:
        length = self._lengths_l[edge]
        if offset < 0.0 or offset > length:
            raise ValueError(f"offset {offset} outside edge of length {length}")
        if offset == 0.0:
            return NetworkPosition(vertex=self._tails_l[edge])
        if offset == length:
            return NetworkPosition(vertex=self._heads_l[edge])
        return NetworkPosition(edge=edge, offset=float(offset))

    def edge_between(self, u: int, v: int) -> int:
        return self._edge_of[(u, v)]

    def edge_length(self, edge: int) -> float:
        return self._lengths_l[edge]

    def tail(self, edge: int) -> int:
        return self._tails_l[edge]

    def head(self, edge: int) -> int:
        return self._heads_l[edge]

    def coords(self, pos: NetworkPosition) -> tuple[float, float]:
        if pos.edge is None:
            return self._x_l[pos.vertex], self._y_l[pos.vertex]
        e = pos.edge
        u, v = self._tails_l[e], self._heads_l[e]
        length = self._lengths_l[e]
        f = pos.offset / length if length > 0 else 0.0
        x0, y0 = self._x_l[u], self._y_l[u]
        return x0 + f * (self._x_l[v] - x0), y0 + f * (self._y_l[v] - y0)

    def vertex_coords(self, v: int) -> tuple[float, float]:
        return self._x_l[v], self._y_l[v]

    def largest_scc(self) -> list[int]:
        """Vertices of the largest strongly connected component, ascending."""
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import connected_components

        n = self.n_vertices
        if n == 0:
            return []
        adj = csr_matrix((np.ones(self.n_edges), (self.tails, self.heads)), shape=(n, n))
        _, labels = connected_components(adj, directed=True, connection="strong")
        counts = np.bincount(labels)
        # lowest label among equally large components, for determinism
        biggest = int(np.argmax(counts))
        return np.flatnonzero(labels == biggest).tolist()

    # -- paths and movement ---------------------------------------------------

    def _pieces(self, path: Sequence[NetworkPosition]):
        """Yield ``(edge, start_offset, end_offset)`` for consecutive path hops."""
        for a, b in zip(path, path[1:]):
            if a.edge is not None:
                e = a.edge
                end = b.offset if b.edge == e else self._lengths_l[e]
                yield e, a.offset, end
            elif b.edge is not None:
                yield b.edge, 0.0, b.offset
            else:
                e = self._edge_of[(a.vertex, b.vertex)]
                yield e, 0.0, self._lengths_l[e]

    def path_length(self, path: Sequence[NetworkPosition]) -> float:
        total = 0.0
        for _, start, end in self._pieces(path):
            total = total + (end - start)
        return total

    def advance(self, pos: NetworkPosition, path: Sequence[NetworkPosition],
                distance: float) -> NetworkPosition:
        """Position ``distance`` meters further along ``path`` (clamped at its end)."""
        return self.advance_path(path, distance)[0]

    def advance_path(self, path: Sequence[NetworkPosition], distance: float) -> list[NetworkPosition]:
        """The remainder of ``path`` after driving ``distance`` meters along it.

        The first element of the result is the new position.
        """
        if distance < 0:
            raise ValueError("distance must be non-negative")
        if distance == 0 or len(path) < 2:
            return list(path)
        left = distance
        for hop, (e, start, end) in enumerate(self._pieces(path)):
            span = end - start
            if left < span:
                here = self.on_edge(e, start + left)
                rest = list(path[hop + 1:])
                if rest and rest[0] == here:
                    return rest
                return [here] + rest
            left -= span
        return [path[-1]]


def load_network(path: str | Path) -> RoadNetwork:
    """Read the ``V <id> <x> <y>`` / ``E <from> <to> <length_m>`` text format."""
    vertices: list[tuple[int, float, float]] = []
    edges: list[tuple[int, int, float]] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "V" and len(parts) == 4:
                    vid = int(parts[1])
                    if vid in seen:
                        raise NetworkFormatError(f"line {lineno}: duplicate vertex {vid}")
                    seen.add(vid)
                    vertices.append((vid, float(parts[2]), float(parts[3])))
                elif tag == "E" and len(parts) == 4:
                    a, b = int(parts[1]), int(parts[2])
                    if a not in seen or b not in seen:
                        raise NetworkFormatError(f"line {lineno}: edge references undeclared vertex")
                    edges.append((a, b, float(parts[3])))
                else:
                    raise NetworkFormatError(f"line {lineno}: unrecognized record {line!r}")
            except ValueError as exc:
                if isinstance(exc, NetworkFormatError):
                    raise
                raise NetworkFormatError(f"line {lineno}: {exc}") from None
    try:
        return RoadNetwork(vertices, edges)
    except NetworkFormatError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from None


def write_network(path: str | Path, vertices: Iterable[tuple[int, float, float]],
                  edges: Iterable[tuple[int, int, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for vid, x, y in vertices:
            fh.write(f"V {vid} {x!r} {y!r}\n")
        for a, b, length in edges:
            fh.write(f"E {a} {b} {length!r}\n")


class TravelTimeProvider:
    """Exact shortest-path travel times at a constant speed.

    Single-source Dijkstra rows are memoized in an LRU cache guarded by a
    lock, so one provider may be queried from several threads.  When the
    cache can hold a row for every vertex nothing is ever evicted, and hits
    skip the LRU bookkeeping.
    """

    def __init__(self, network: RoadNetwork, speed: float, cache_size: int = 4096):
        if speed <= 0:
            raise ValueError("speed must be positive")
        self.network = network
        self.speed = float(speed)
        self.cache_size = cache_size
        self._rows: OrderedDict[int, tuple[array, np.ndarray]] = OrderedDict()
        self._lock = threading.Lock()
        self.dijkstra_runs = 0
        self._evicting = cache_size < network.n_vertices

    def _entry(self, u: int) -> tuple[array, np.ndarray]:
        if not self._evicting:
            hit = self._rows.get(u)
            if hit is not None:
                return hit
        else:
            with self._lock:
                hit = self._rows.get(u)
                if hit is not None:
                    self._rows.move_to_end(u)
                    return hit
        net = self.network
        dist, pred = kernels.dijkstra(net.csr_indptr, net.csr_heads, net.csr_weights,
                                      net.csr_edge_ids, u)
        row = array("d")
        row.frombytes(dist.tobytes())
        with self._lock:
            self.dijkstra_runs += 1
            self._rows[u] = (row, pred)
            if len(self._rows) > self.cache_size:
                self._rows.popitem(last=False)
        return row, pred

    def row(self, u: int) -> array:
        """Shortest distances (meters) from vertex ``u`` to every vertex."""
        return self._entry(u)[0]

    def distance(self, a: NetworkPosition, b: NetworkPosition) -> float:
        """Shortest network distance in meters (``inf`` when unreachable)."""
        net = self.network
        if a.edge is None:
            if b.edge is None:
                if a.vertex == b.vertex:
                    return 0.0
                return self._entry(a.vertex)[0][b.vertex]
            return self._entry(a.vertex)[0][net._tails_l[b.edge]] + b.offset
        ea = a.edge
        if b.edge == ea and b.offset >= a.offset:
            return b.offset - a.offset
        rest = net._lengths_l[ea] - a.offset
        row = self._entry(net._heads_l[ea])[0]
        if b.edge is None:
            return rest + row[b.vertex]
        return rest + row[net._tails_l[b.edge]] + b.offset

    def time(self, a: NetworkPosition, b: NetworkPosition) -> float:
        """Travel time in seconds (``inf`` when unreachable)."""
        return self.distance(a, b) / self.speed

    def times_from(self, a: NetworkPosition, targets: Sequence[NetworkPosition]) -> list[float]:
        """``[time(a, b) for b in targets]`` with one row lookup."""
        if a.edge is not None:
            return [self.distance(a, b) / self.speed for b in targets]
        row = self._entry(a.vertex)[0]
        tails = self.network._tails_l
        v = self.speed
        out = []
        for b in targets:
            if b.edge is None:
                out.append((0.0 if b.vertex == a.vertex else row[b.vertex]) / v)
            else:
                out.append((row[tails[b.edge]] + b.offset) / v)
        return out

    def shortest_travel_time(self, src: NetworkPosition, dst: NetworkPosition) -> float:
        t = self.time(src, dst)
        if math.isinf(t):
            raise DisconnectedError(f"{dst} unreachable from {src}")
        return t

    def shortest_path(self, src: NetworkPosition, dst: NetworkPosition) -> list[NetworkPosition]:
        """Vertex chain from ``src`` to ``dst``, with mid-edge endpoints kept."""
        if src == dst:
            return [src]
        net = self.network
        if src.edge is not None and dst.edge == src.edge and dst.offset >= src.offset:
            return [src, dst]
        if math.isinf(self.distance(src, dst)):
            raise DisconnectedError(f"{dst} unreachable from {src}")
        prefix = [src] if src.edge is not None else []
        start = net._heads_l[src.edge] if src.edge is not None else src.vertex
        suffix = [dst] if dst.edge is not None else []
        target = net._tails_l[dst.edge] if dst.edge is not None else dst.vertex
        pred = self._entry(start)[1]
        chain = [target]
        v = target
        while v != start:
            e = int(pred[v])
            v = net._tails_l[e]
            chain.append(v)
        chain.reverse()
        return prefix + [NetworkPosition(vertex=v) for v in chain] + suffix
