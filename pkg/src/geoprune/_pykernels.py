"""Pure-Python versions of the hot kernels.

These are the reference implementations: the compiled module in
``_ckernels.pyx`` performs the same floating-point operations in the same
order, so both backends return bit-identical results.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

INF = math.inf


def dijkstra(indptr, heads, weights, edge_ids, source):
    """Single-source shortest distances over a CSR graph.

    Returns ``(dist, pred)`` where ``pred[v]`` is the id of the edge used to
    reach ``v`` (``-1`` for the source and unreachable vertices).
    """
    indptr = indptr.tolist() if isinstance(indptr, np.ndarray) else indptr
    heads = heads.tolist() if isinstance(heads, np.ndarray) else heads
    weights = weights.tolist() if isinstance(weights, np.ndarray) else weights
    edge_ids = edge_ids.tolist() if isinstance(edge_ids, np.ndarray) else edge_ids

    n = len(indptr) - 1
    dist = [INF] * n
    pred = [-1] * n
    done = [False] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = True
        for slot in range(indptr[u], indptr[u + 1]):
            v = heads[slot]
            nd = d + weights[slot]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = edge_ids[slot]
                push(heap, (nd, v))
    return np.array(dist, dtype=np.float64), np.array(pred, dtype=np.int64)


def scan_insertions(legs, ddl, delta, onboard, capacity, eta,
                    to_s, s_to, to_e, e_to, t_se, lp, ld, now,
                    pair_i=None, pair_j=None):
    """Evaluate inserting a pickup/drop-off pair into a schedule.

    Arrays are indexed by stop number ``k = 0..m``; index 0 of ``legs``,
    ``ddl``, ``delta``, ``s_to`` and ``e_to`` is unused.  ``to_s[k]`` is the
    travel time from stop ``k`` to the new source, ``s_to[k]`` from the new
    source to stop ``k``, likewise for the destination.  Slot ``i`` places the
    source right before stop ``i`` (``m + 1`` appends).

    With no pairs given, every ``1 <= i <= j <= m + 1`` is tried in
    lexicographic order.  Returns ``(best_i, best_j, best_increase, n_valid)``;
    ``best_i == 0`` when no pair is valid.  Ties keep the first pair.
    """
    m = len(legs) - 1
    old_end = now
    for k in range(1, m + 1):
        old_end = old_end + legs[k]

    if pair_i is None:
        pairs = [(i, j) for i in range(1, m + 2) for j in range(i, m + 2)]
    else:
        pairs = zip(pair_i, pair_j)

    best_i = best_j = 0
    best_inc = INF
    n_valid = 0
    for i, j in pairs:
        arr = now
        load = onboard
        prev = 0
        ok = True
        for k in range(1, m + 2):
            if k == i:
                arr = arr + to_s[k - 1]
                if arr > lp:
                    ok = False
                    break
                load += eta
                if load > capacity:
                    ok = False
                    break
                if k == j:
                    arr = arr + t_se
                    if arr > ld:
                        ok = False
                        break
                    load -= eta
                    prev = 2
                else:
                    prev = 1
            elif k == j:
                arr = arr + to_e[k - 1]
                if arr > ld:
                    ok = False
                    break
                load -= eta
                prev = 2
            if k == m + 1:
                break
            if prev == 1:
                arr = arr + s_to[k]
            elif prev == 2:
                arr = arr + e_to[k]
            else:
                arr = arr + legs[k]
            if arr > ddl[k]:
                ok = False
                break
            load += delta[k]
            if load > capacity:
                ok = False
                break
            prev = 0
        if not ok:
            continue
        n_valid += 1
        inc = arr - old_end
        if inc < best_inc:
            best_inc = inc
            best_i, best_j = i, j
    return best_i, best_j, best_inc, n_valid
