"""JIT-compiled kernels for the HNSW graph.

Everything here operates on flat arrays: `vec` is the float64 vector matrix,
`adj`/`deg` are one layer's adjacency (each row has one slack slot so a node
may hold max-degree + 1 edges between the reciprocal insert and the prune
that follows). Distances are negated dot products, so smaller is closer.

Heaps are binary min-heaps over (key, node id) with the id as tie-breaker,
which keeps construction fully deterministic. First use pays a one-off JIT
compile; call :func:`specrag.vindex.warm_kernels` to pay it up front.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _dot(a: np.ndarray, b: np.ndarray) -> float:
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def _heap_push(keys, ids, size, key, ident):
    """Push (key, ident) onto a min-heap ordered by (key, id)."""
    i = size
    keys[i] = key
    ids[i] = ident
    while i > 0:
        p = (i - 1) >> 1
        if keys[p] > keys[i] or (keys[p] == keys[i] and ids[p] > ids[i]):
            keys[p], keys[i] = keys[i], keys[p]
            ids[p], ids[i] = ids[i], ids[p]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(keys, ids, size):
    """Pop the root; returns (key, ident, new_size)."""
    key = keys[0]
    ident = ids[0]
    size -= 1
    keys[0] = keys[size]
    ids[0] = ids[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        m = i
        if left < size and (
            keys[left] < keys[m] or (keys[left] == keys[m] and ids[left] < ids[m])
        ):
            m = left
        if right < size and (
            keys[right] < keys[m] or (keys[right] == keys[m] and ids[right] < ids[m])
        ):
            m = right
        if m == i:
            break
        keys[m], keys[i] = keys[i], keys[m]
        ids[m], ids[i] = ids[i], ids[m]
        i = m
    return key, ident, size


@njit(cache=True)
def greedy_descend(vec, adj, deg, q, node, dist):
    """Steepest-descent walk to a local minimum of distance to `q`."""
    while True:
        best_d = dist
        best = -1
        for t in range(deg[node]):
            x = adj[node, t]
            dx = -_dot(vec[x], q)
            if dx < best_d:
                best_d = dx
                best = x
        if best < 0:
            return node, dist
        node = best
        dist = best_d


@njit(cache=True)
def search_layer(vec, adj, deg, n_nodes, q, ep_ids, ep_dists, ef):
    """Best-first beam search within one layer.

    Returns (sims, ids) of at most min(ef, n_nodes) nodes in heap order
    (worst similarity at index 0).
    """
    res_cap = ef if ef < n_nodes else n_nodes
    visited = np.zeros(n_nodes, dtype=np.uint8)
    cand_keys = np.empty(n_nodes + 1, dtype=np.float64)
    cand_ids = np.empty(n_nodes + 1, dtype=np.int64)
    csz = 0
    res_keys = np.empty(res_cap + 1, dtype=np.float64)  # similarities, worst at root
    res_ids = np.empty(res_cap + 1, dtype=np.int64)
    rsz = 0

    for j in range(ep_ids.shape[0]):
        x = ep_ids[j]
        if visited[x]:
            continue
        visited[x] = 1
        d = ep_dists[j]
        if rsz < res_cap:
            csz = _heap_push(cand_keys, cand_ids, csz, d, x)
            rsz = _heap_push(res_keys, res_ids, rsz, -d, x)
        elif -d > res_keys[0]:
            csz = _heap_push(cand_keys, cand_ids, csz, d, x)
            _, _, rsz = _heap_pop(res_keys, res_ids, rsz)
            rsz = _heap_push(res_keys, res_ids, rsz, -d, x)

    while csz > 0:
        d, node, csz = _heap_pop(cand_keys, cand_ids, csz)
        if rsz >= res_cap and d > -res_keys[0]:
            break
        for t in range(deg[node]):
            x = adj[node, t]
            if visited[x]:
                continue
            visited[x] = 1
            s = _dot(vec[x], q)
            if rsz < res_cap:
                csz = _heap_push(cand_keys, cand_ids, csz, -s, x)
                rsz = _heap_push(res_keys, res_ids, rsz, s, x)
            elif s > res_keys[0]:
                csz = _heap_push(cand_keys, cand_ids, csz, -s, x)
                _, _, rsz = _heap_pop(res_keys, res_ids, rsz)
                rsz = _heap_push(res_keys, res_ids, rsz, s, x)

    return res_keys[:rsz].copy(), res_ids[:rsz].copy()


@njit(cache=True)
def _select(vec, ids, dists, m_max, out):
    """Diversity-heuristic neighbor selection.

    `ids`/`dists` must be sorted ascending by (distance, id). A candidate
    survives only if it is closer to the query than to every neighbor kept
    so far; discarded candidates fill any remaining slots in distance order.
    Writes up to `m_max` ids into `out`, returns the count.
    """
    n = ids.shape[0]
    if n <= m_max:
        for i in range(n):
            out[i] = ids[i]
        return n
    discarded = np.empty(n, dtype=np.int64)
    dcount = 0
    scount = 0
    for i in range(n):
        if scount >= m_max:
            break
        sim_q = -dists[i]
        vi = vec[ids[i]]
        ok = True
        for j in range(scount):
            if _dot(vi, vec[out[j]]) > sim_q:
                ok = False
                break
        if ok:
            out[scount] = ids[i]
            scount += 1
        else:
            discarded[dcount] = ids[i]
            dcount += 1
    for t in range(dcount):
        if scount >= m_max:
            break
        out[scount] = discarded[t]
        scount += 1
    return scount


@njit(cache=True)
def _shrink(vec, adj, deg, node, m_max):
    """Re-prune an over-degree node; dropped edges are removed on both ends."""
    c = deg[node]
    ids = np.empty(c, dtype=np.int64)
    dists = np.empty(c, dtype=np.float64)
    vn = vec[node]
    for t in range(c):
        x = adj[node, t]
        ids[t] = x
        dists[t] = -_dot(vn, vec[x])
    # insertion sort by (distance, id); c is at most max degree + 1
    for i in range(1, c):
        di = dists[i]
        xi = ids[i]
        j = i - 1
        while j >= 0 and (dists[j] > di or (dists[j] == di and ids[j] > xi)):
            dists[j + 1] = dists[j]
            ids[j + 1] = ids[j]
            j -= 1
        dists[j + 1] = di
        ids[j + 1] = xi

    keep = np.empty(m_max, dtype=np.int64)
    kcount = _select(vec, ids, dists, m_max, keep)

    for t in range(c):
        y = ids[t]
        kept = False
        for u in range(kcount):
            if keep[u] == y:
                kept = True
                break
        if not kept:
            dy = deg[y]
            for u in range(dy):
                if adj[y, u] == node:
                    for w in range(u, dy - 1):
                        adj[y, w] = adj[y, w + 1]
                    deg[y] = dy - 1
                    break
    for t in range(kcount):
        adj[node, t] = keep[t]
    deg[node] = kcount


@njit(cache=True)
def connect_node(vec, adj, deg, node, cand_ids, cand_dists, m_max):
    """Wire a new node into one layer: select, add reciprocal edges, prune."""
    sel = np.empty(m_max, dtype=np.int64)
    scount = _select(vec, cand_ids, cand_dists, m_max, sel)
    for t in range(scount):
        adj[node, t] = sel[t]
    deg[node] = scount
    for t in range(scount):
        nb = sel[t]
        adj[nb, deg[nb]] = node
        deg[nb] += 1
        if deg[nb] > m_max:
            _shrink(vec, adj, deg, nb, m_max)
