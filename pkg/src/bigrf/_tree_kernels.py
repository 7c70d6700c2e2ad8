"""Compiled inner loops for tree growth and traversal.

All kernels take the full feature matrix plus a row-id array, so a tree grown
on a weighted subsample never copies the data it does not use.
"""

import heapq

import numpy as np
from numba import njit

EXHAUSTIVE = 0
ERT = 1


@njit(cache=True, nogil=True)
def gini(counts, total):
    if total <= 0.0:
        return 0.0
    s = 0.0
    for c in range(counts.shape[0]):
        q = counts[c] / total
        s += q * q
    return 1.0 - s


@njit(cache=True, nogil=True)
def split_decrease(parent_gini, left, wl, right, wr, total):
    return parent_gini - (wl / total) * gini(left, wl) - (wr / total) * gini(right, wr)


@njit(cache=True, nogil=True)
def _is_pure(counts):
    seen = 0
    for c in range(counts.shape[0]):
        if counts[c] > 0.0:
            seen += 1
    return seen <= 1


@njit(cache=True, nogil=True)
def best_split_exhaustive(X, y, samples, weights, start, end, features, counts, total):
    """Best (feature, midpoint) over ``features`` for rows ``samples[start:end]``.

    ``features`` must be sorted ascending; with a strict comparison that makes
    ties resolve to the lowest feature, then the lowest threshold.
    Returns ``(feature, threshold, decrease)`` with ``feature == -1`` when no
    split has a positive decrease.
    """
    n_classes = counts.shape[0]
    n_node = end - start
    parent = gini(counts, total)
    best_f = -1
    best_t = 0.0
    best_d = 0.0
    if n_node < 2:
        return best_f, best_t, best_d
    vals = np.empty(n_node)
    left = np.empty(n_classes)
    right = np.empty(n_classes)
    for fi in range(features.shape[0]):
        f = features[fi]
        for i in range(n_node):
            vals[i] = X[samples[start + i], f]
        order = np.argsort(vals)
        left[:] = 0.0
        wl = 0.0
        for k in range(n_node - 1):
            r = start + order[k]
            left[y[samples[r]]] += weights[r]
            wl += weights[r]
            v = vals[order[k]]
            vn = vals[order[k + 1]]
            if vn <= v:
                continue
            for c in range(n_classes):
                right[c] = counts[c] - left[c]
            wr = total - wl
            d = split_decrease(parent, left, wl, right, wr, total)
            if d > best_d:
                t = 0.5 * (v + vn)
                if t >= vn:
                    t = v
                best_f = f
                best_t = t
                best_d = d
    return best_f, best_t, best_d


@njit(cache=True, nogil=True)
def best_split_ert(X, y, samples, weights, start, end, features, counts, total, n_candidates):
    """Best of ``n_candidates`` random (feature, threshold) draws.

    Each draw picks a feature uniformly from ``features`` and a threshold
    uniformly in the node's observed ``[min, max]`` for it. Draws with zero
    decrease are discarded. Uses numba's global generator, which the caller
    seeds.
    """
    n_classes = counts.shape[0]
    parent = gini(counts, total)
    best_f = -1
    best_t = 0.0
    best_d = 0.0
    left = np.empty(n_classes)
    right = np.empty(n_classes)
    nf = features.shape[0]
    for s in range(n_candidates):
        f = features[np.random.randint(0, nf)]
        u = np.random.random()
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            v = X[samples[i], f]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        if not hi > lo:
            continue
        t = lo + (hi - lo) * u
        left[:] = 0.0
        wl = 0.0
        for i in range(start, end):
            if X[samples[i], f] <= t:
                left[y[samples[i]]] += weights[i]
                wl += weights[i]
        if wl <= 0.0 or wl >= total:
            continue
        for c in range(n_classes):
            right[c] = counts[c] - left[c]
        d = split_decrease(parent, left, wl, right, total - wl, total)
        if d > best_d or (
            d == best_d and d > 0.0 and (f < best_f or (f == best_f and t < best_t))
        ):
            best_f = f
            best_t = t
            best_d = d
    return best_f, best_t, best_d


@njit(cache=True, nogil=True)
def _draw_features(p, mtry):
    perm = np.arange(p)
    for i in range(mtry):
        j = np.random.randint(i, p)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return np.sort(perm[:mtry])


@njit(cache=True, nogil=True)
def _node_split(X, y, samples, weights, start, end, counts, total, mtry, mode, n_candidates):
    features = _draw_features(X.shape[1], mtry)
    if mode == EXHAUSTIVE:
        return best_split_exhaustive(X, y, samples, weights, start, end, features, counts, total)
    return best_split_ert(X, y, samples, weights, start, end, features, counts, total, n_candidates)


@njit(cache=True, nogil=True)
def grow(X, y, idx, w, n_classes, mtry, max_leaves, max_depth, min_node_weight, mode,
         n_candidates, seed):
    """Best-first growth under a leaf budget.

    Every new node gets its best split computed at creation; the frontier is a
    max-heap on ``node_weight * decrease`` (total impurity removed), ties
    going to the lowest node id. ``max_leaves == 0`` / ``max_depth == 0`` mean
    unlimited.
    """
    np.random.seed(seed)
    n = idx.shape[0]
    samples = idx.copy()
    weights = w.copy()
    cap = 2 * n + 1
    if max_leaves > 0 and 2 * max_leaves - 1 < cap:
        cap = 2 * max_leaves - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    value = np.zeros((cap, n_classes))
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_t = np.zeros(cap)

    for i in range(n):
        value[0, y[samples[i]]] += weights[i]
    end[0] = n
    n_nodes = 1
    n_leaves = 1
    heap = [(0.0, 0)]
    heap.pop()

    # the root goes through the same creation path as every child
    pending = np.empty(2, dtype=np.int64)
    pending[0] = 0
    n_pending = 1
    while True:
        for k in range(n_pending):
            node = pending[k]
            total = 0.0
            for c in range(n_classes):
                total += value[node, c]
            if total < min_node_weight or _is_pure(value[node]):
                continue
            if max_depth > 0 and depth[node] >= max_depth:
                continue
            if end[node] - start[node] < 2:
                continue
            f, t, d = _node_split(X, y, samples, weights, start[node], end[node],
                                  value[node], total, mtry, mode, n_candidates)
            if f >= 0:
                cand_f[node] = f
                cand_t[node] = t
                heapq.heappush(heap, (-(total * d), node))
        if len(heap) == 0 or (max_leaves > 0 and n_leaves >= max_leaves):
            break
        _, node = heapq.heappop(heap)
        f = cand_f[node]
        t = cand_t[node]
        lo = start[node]
        hi = end[node] - 1
        while lo <= hi:
            if X[samples[lo], f] <= t:
                lo += 1
            else:
                s = samples[lo]
                samples[lo] = samples[hi]
                samples[hi] = s
                ww = weights[lo]
                weights[lo] = weights[hi]
                weights[hi] = ww
                hi -= 1
        feature[node] = f
        threshold[node] = t
        a = n_nodes
        b = n_nodes + 1
        n_nodes += 2
        left[node] = a
        right[node] = b
        start[a] = start[node]
        end[a] = lo
        start[b] = lo
        end[b] = end[node]
        depth[a] = depth[node] + 1
        depth[b] = depth[node] + 1
        for i in range(start[a], end[a]):
            value[a, y[samples[i]]] += weights[i]
        for i in range(start[b], end[b]):
            value[b, y[samples[i]]] += weights[i]
        n_leaves += 1
        pending[0] = a
        pending[1] = b
        n_pending = 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), depth[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def apply_rows(feature, threshold, left, right, X, rows):
    out = np.empty(rows.shape[0], dtype=np.int64)
    for k in range(rows.shape[0]):
        i = rows[k]
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[k] = node
    return out


@njit(cache=True, nogil=True)
def add_votes(votes, rows, pred):
    for k in range(rows.shape[0]):
        votes[rows[k], pred[k]] += 1
