# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Mirrors ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline bint _less(double da, long va, double db, long vb) noexcept nogil:
    return da < db or (da == db and va < vb)


cdef void _sift_down(double* hd, long* hv, long n, long pos) noexcept nogil:
    cdef long child
    cdef double d = hd[pos]
    cdef long v = hv[pos]
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and _less(hd[child + 1], hv[child + 1], hd[child], hv[child]):
            child += 1
        if _less(hd[child], hv[child], d, v):
            hd[pos] = hd[child]
            hv[pos] = hv[child]
            pos = child
        else:
            break
    hd[pos] = d
    hv[pos] = v


cdef void _sift_up(double* hd, long* hv, long pos) noexcept nogil:
    cdef long parent
    cdef double d = hd[pos]
    cdef long v = hv[pos]
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(d, v, hd[parent], hv[parent]):
            hd[pos] = hd[parent]
            hv[pos] = hv[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hv[pos] = v


def dijkstra(indptr, heads, weights, edge_ids, long source):
    cdef const long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long[::1] hd_ = np.ascontiguousarray(heads, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const long[::1] eid = np.ascontiguousarray(edge_ids, dtype=np.int64)
    cdef long n = ip.shape[0] - 1
    cdef long n_edges = hd_.shape[0]

    dist_arr = np.full(n, np.inf, dtype=np.float64)
    pred_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] dist = dist_arr
    cdef long[::1] pred = pred_arr
    cdef cnp.ndarray done_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] done = done_arr

    # every push strictly lowers dist[v], so the heap never exceeds edges + 1
    cdef long cap = n_edges + 1
    cdef double* hd = <double*> malloc(cap * sizeof(double))
    cdef long* hv = <long*> malloc(cap * sizeof(long))
    if hd == NULL or hv == NULL:
        free(hd)
        free(hv)
        raise MemoryError()

    cdef long size = 0
    cdef long u, v, slot
    cdef double d, nd
    with nogil:
        dist[source] = 0.0
        hd[0] = 0.0
        hv[0] = source
        size = 1
        while size > 0:
            d = hd[0]
            u = hv[0]
            size -= 1
            if size > 0:
                hd[0] = hd[size]
                hv[0] = hv[size]
                _sift_down(hd, hv, size, 0)
            if done[u]:
                continue
            done[u] = 1
            for slot in range(ip[u], ip[u + 1]):
                v = hd_[slot]
                nd = d + w[slot]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = eid[slot]
                    hd[size] = nd
                    hv[size] = v
                    _sift_up(hd, hv, size)
                    size += 1
    free(hd)
    free(hv)
    return dist_arr, pred_arr


cdef inline void _fill_d(object seq, double* out, Py_ssize_t n) except *:
    cdef Py_ssize_t k
    for k in range(n):
        out[k] = seq[k]


cdef inline void _fill_l(object seq, long* out, Py_ssize_t n) except *:
    cdef Py_ssize_t k
    for k in range(n):
        out[k] = seq[k]


def scan_insertions(legs, ddl, delta, long onboard, long capacity, long eta,
                    to_s, s_to, to_e, e_to, double t_se, double lp, double ld,
                    double now, pair_i=None, pair_j=None):
    cdef long m = len(legs) - 1
    cdef long n1 = m + 1
    cdef long k, i, j, p, n_pairs, prev, load
    cdef double arr, old_end, inc
    cdef bint ok
    cdef bint all_pairs = pair_i is None
    if all_pairs:
        n_pairs = (m + 1) * (m + 2) // 2
    else:
        n_pairs = len(pair_i)
        if len(pair_j) != n_pairs:
            raise ValueError("pair_i and pair_j differ in length")

    # six double arrays of m + 1, delta, and the pair lists share one block
    cdef char* block = <char*> malloc(6 * n1 * sizeof(double) + (n1 + 2 * n_pairs + 1) * sizeof(long))
    if block == NULL:
        raise MemoryError()
    cdef double* lg = <double*> block
    cdef double* dl = lg + n1
    cdef double* ts = dl + n1
    cdef double* st = ts + n1
    cdef double* te = st + n1
    cdef double* et = te + n1
    cdef long* dt = <long*> (et + n1)
    cdef long* pis = dt + n1
    cdef long* pjs = pis + n_pairs
    cdef long best_i = 0, best_j = 0, n_valid = 0
    cdef double best_inc = INFINITY
    try:
        _fill_d(legs, lg, n1)
        _fill_d(ddl, dl, n1)
        _fill_d(to_s, ts, n1)
        _fill_d(s_to, st, n1)
        _fill_d(to_e, te, n1)
        _fill_d(e_to, et, n1)
        _fill_l(delta, dt, n1)
        if all_pairs:
            p = 0
            for i in range(1, m + 2):
                for j in range(i, m + 2):
                    pis[p] = i
                    pjs[p] = j
                    p += 1
        else:
            _fill_l(pair_i, pis, n_pairs)
            _fill_l(pair_j, pjs, n_pairs)

        old_end = now
        for k in range(1, m + 1):
            old_end = old_end + lg[k]

        with nogil:
            for p in range(n_pairs):
                i = pis[p]
                j = pjs[p]
                arr = now
                load = onboard
                prev = 0
                ok = True
                for k in range(1, m + 2):
                    if k == i:
                        arr = arr + ts[k - 1]
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
                        arr = arr + te[k - 1]
                        if arr > ld:
                            ok = False
                            break
                        load -= eta
                        prev = 2
                    if k == m + 1:
                        break
                    if prev == 1:
                        arr = arr + st[k]
                    elif prev == 2:
                        arr = arr + et[k]
                    else:
                        arr = arr + lg[k]
                    if arr > dl[k]:
                        ok = False
                        break
                    load += dt[k]
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
                    best_i = i
                    best_j = j
    finally:
        free(block)
    return best_i, best_j, best_inc, n_valid
