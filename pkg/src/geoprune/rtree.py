"""Dynamic R-tree over axis-aligned rectangles (points are degenerate boxes).

Guttman's insertion with quadratic split; deletion condenses underfull
nodes and reinserts their entries.  Boundaries are closed for every query.
Not thread-safe for writers: mutate from one context, query between
mutations from any number of readers.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Hashable, Iterator

Box = tuple[float, float, float, float]


def _union(a: Box, b: Box) -> Box:
    return (a[0] if a[0] < b[0] else b[0], a[1] if a[1] < b[1] else b[1],
            a[2] if a[2] > b[2] else b[2], a[3] if a[3] > b[3] else b[3])


def _area(b: Box) -> float:
    return (b[2] - b[0]) * (b[3] - b[1])


def _covers(outer: Box, inner: Box) -> bool:
    return outer[0] <= inner[0] and outer[1] <= inner[1] and outer[2] >= inner[2] and outer[3] >= inner[3]


def _mindist2(b: Box, x: float, y: float) -> float:
    dx = b[0] - x if x < b[0] else (x - b[2] if x > b[2] else 0.0)
    dy = b[1] - y if y < b[1] else (y - b[3] if y > b[3] else 0.0)
    return dx * dx + dy * dy


class _Node:
    __slots__ = ("height", "entries", "parent")

    def __init__(self, height: int):
        self.height = height  # 0 for leaves
        self.entries: list[list] = []  # [box, child node | key]
        self.parent: _Node | None = None

    def box(self) -> Box:
        it = iter(self.entries)
        b = next(it)[0]
        for e in it:
            b = _union(b, e[0])
        return b


class RTree:
    """Rectangle index keyed by unique hashable keys.

    ``node_visits`` counts nodes touched by queries; ``touches`` counts
    inserts plus deletes.  Both are plain counters for cost accounting.
    """

    def __init__(self, max_entries: int = 16, min_entries: int | None = None):
        if max_entries < 4:
            raise ValueError("max_entries must be >= 4")
        self.max_entries = max_entries
        self.min_entries = min_entries if min_entries is not None else max(2, (max_entries * 2) // 5)
        if not 1 <= self.min_entries <= max_entries // 2:
            raise ValueError("min_entries must lie in [1, max_entries // 2]")
        self._root = _Node(0)
        self._boxes: dict[Hashable, Box] = {}
        self._payloads: dict[Hashable, Any] = {}
        self.node_visits = 0
        self.touches = 0

    def __len__(self) -> int:
        return len(self._boxes)

    def __contains__(self, key: Hashable) -> bool:
        return key in self._boxes

    def box(self, key: Hashable) -> Box:
        return self._boxes[key]

    def payload(self, key: Hashable) -> Any:
        return self._payloads[key]

    def items(self) -> Iterator[tuple[Hashable, Box, Any]]:
        for k, b in self._boxes.items():
            yield k, b, self._payloads[k]

    # -- mutation ---------------------------------------------------------------

    def insert(self, key: Hashable, box: Box, payload: Any = None) -> None:
        if key in self._boxes:
            raise KeyError(f"duplicate key {key!r}")
        box = (float(box[0]), float(box[1]), float(box[2]), float(box[3]))
        if box[0] > box[2] or box[1] > box[3]:
            raise ValueError(f"inverted box {box}")
        self._boxes[key] = box
        self._payloads[key] = payload
        self._insert_entry([box, key], 0)
        self.touches += 1

    def delete(self, key: Hashable) -> None:
        box = self._boxes.get(key)
        if box is None:
            raise KeyError(f"missing key {key!r}")
        leaf = self._find_leaf(self._root, key, box)
        if leaf is None:  # pragma: no cover - would mean a corrupted tree
            raise RuntimeError(f"key {key!r} absent from tree structure")
        for idx, ent in enumerate(leaf.entries):
            if ent[1] == key:
                del leaf.entries[idx]
                break
        del self._boxes[key]
        del self._payloads[key]
        self._condense(leaf)
        root = self._root
        if root.height > 0 and len(root.entries) == 1:
            child = root.entries[0][1]
            child.parent = None
            self._root = child
        self.touches += 1

    def _insert_entry(self, entry: list, height: int) -> None:
        node = self._choose(entry[0], height)
        node.entries.append(entry)
        if height > 0:
            entry[1].parent = node
        split = self._split(node) if len(node.entries) > self.max_entries else None
        self._adjust(node, split)

    def _choose(self, box: Box, height: int) -> _Node:
        node = self._root
        while node.height > height:
            best = None
            best_key = None
            for ent in node.entries:
                b = ent[0]
                area = _area(b)
                grown = _area(_union(b, box)) - area
                k = (grown, area)
                if best_key is None or k < best_key:
                    best_key, best = k, ent
            node = best[1]
        return node

    def _split(self, node: _Node) -> _Node:
        entries = node.entries
        n = len(entries)
        worst = -1.0
        seeds = (0, 1)
        for a in range(n):
            ba = entries[a][0]
            area_a = _area(ba)
            for b in range(a + 1, n):
                bb = entries[b][0]
                d = _area(_union(ba, bb)) - area_a - _area(bb)
                if d > worst:
                    worst, seeds = d, (a, b)
        g1 = [entries[seeds[0]]]
        g2 = [entries[seeds[1]]]
        b1, b2 = g1[0][0], g2[0][0]
        rest = [e for idx, e in enumerate(entries) if idx not in seeds]
        lo = self.min_entries
        while rest:
            if len(g1) + len(rest) == lo:
                g1.extend(rest)
                for e in rest:
                    b1 = _union(b1, e[0])
                break
            if len(g2) + len(rest) == lo:
                g2.extend(rest)
                for e in rest:
                    b2 = _union(b2, e[0])
                break
            a1, a2 = _area(b1), _area(b2)
            pick, pick_diff, pick_d1, pick_d2 = 0, -1.0, 0.0, 0.0
            for idx, e in enumerate(rest):
                d1 = _area(_union(b1, e[0])) - a1
                d2 = _area(_union(b2, e[0])) - a2
                diff = abs(d1 - d2)
                if diff > pick_diff:
                    pick, pick_diff, pick_d1, pick_d2 = idx, diff, d1, d2
            e = rest.pop(pick)
            if (pick_d1, a1, len(g1)) <= (pick_d2, a2, len(g2)):
                g1.append(e)
                b1 = _union(b1, e[0])
            else:
                g2.append(e)
                b2 = _union(b2, e[0])
        node.entries = g1
        sibling = _Node(node.height)
        sibling.entries = g2
        if node.height > 0:
            for e in g1:
                e[1].parent = node
            for e in g2:
                e[1].parent = sibling
        return sibling

    def _adjust(self, node: _Node, split: _Node | None) -> None:
        while True:
            parent = node.parent
            if parent is None:
                if split is not None:
                    root = _Node(node.height + 1)
                    root.entries = [[node.box(), node], [split.box(), split]]
                    node.parent = root
                    split.parent = root
                    self._root = root
                return
            for ent in parent.entries:
                if ent[1] is node:
                    ent[0] = node.box()
                    break
            if split is not None:
                parent.entries.append([split.box(), split])
                split.parent = parent
                split = self._split(parent) if len(parent.entries) > self.max_entries else None
            node = parent

    def _find_leaf(self, node: _Node, key: Hashable, box: Box) -> _Node | None:
        if node.height == 0:
            for ent in node.entries:
                if ent[1] == key:
                    return node
            return None
        for ent in node.entries:
            if _covers(ent[0], box):
                found = self._find_leaf(ent[1], key, box)
                if found is not None:
                    return found
        return None

    def _condense(self, node: _Node) -> None:
        orphans: list[_Node] = []
        while node.parent is not None:
            parent = node.parent
            if len(node.entries) < self.min_entries:
                parent.entries = [e for e in parent.entries if e[1] is not node]
                orphans.append(node)
            else:
                for ent in parent.entries:
                    if ent[1] is node:
                        ent[0] = node.box()
                        break
            node = parent
        for orphan in orphans:
            for ent in orphan.entries:
                self._insert_entry(ent, orphan.height)

    # -- queries -----------------------------------------------------------------

    def point_query(self, x: float, y: float) -> list[Hashable]:
        """Keys whose boxes contain ``(x, y)``."""
        out = []
        root = self._root
        if not root.entries:
            return out
        stack = [root]
        visits = 0
        while stack:
            node = stack.pop()
            visits += 1
            leaf = node.height == 0
            for b, item in node.entries:
                if b[0] <= x <= b[2] and b[1] <= y <= b[3]:
                    if leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        self.node_visits += visits
        return out

    def range_query(self, window: Box) -> list[Hashable]:
        """Keys whose boxes intersect ``window``."""
        out = []
        root = self._root
        if not root.entries:
            return out
        wx0, wy0, wx1, wy1 = window
        stack = [root]
        visits = 0
        while stack:
            node = stack.pop()
            visits += 1
            leaf = node.height == 0
            for b, item in node.entries:
                if b[0] <= wx1 and wx0 <= b[2] and b[1] <= wy1 and wy0 <= b[3]:
                    if leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        self.node_visits += visits
        return out

    def nearest_stream(self, x: float, y: float) -> Iterator[tuple[Hashable, float]]:
        """Yield ``(key, squared distance)`` by ascending distance to the boxes.

        Equal distances come out in key order.  The tree must not be mutated
        while the iterator is alive.
        """
        root = self._root
        if not root.entries:
            return
        counter = itertools.count()
        heap: list[tuple] = [(0.0, 0, next(counter), root)]
        while heap:
            d2, kind, tag, item = heapq.heappop(heap)
            if kind == 1:
                yield tag, d2
                continue
            self.node_visits += 1
            if item.height == 0:
                for b, key in item.entries:
                    heapq.heappush(heap, (_mindist2(b, x, y), 1, key, None))
            else:
                for b, child in item.entries:
                    heapq.heappush(heap, (_mindist2(b, x, y), 0, next(counter), child))

    # -- diagnostics ---------------------------------------------------------------

    def check(self) -> None:
        """Assert structural invariants (for tests)."""
        seen = []

        def walk(node: _Node, depth_left: int):
            assert node.height == depth_left
            if node is not self._root:
                assert self.min_entries <= len(node.entries) <= self.max_entries
            for b, item in node.entries:
                if node.height == 0:
                    assert b == self._boxes[item]
                    seen.append(item)
                else:
                    assert item.parent is node
                    assert b == item.box()
                    walk(item, depth_left - 1)

        if self._root.entries:
            walk(self._root, self._root.height)
        assert sorted(map(repr, seen)) == sorted(map(repr, self._boxes))
