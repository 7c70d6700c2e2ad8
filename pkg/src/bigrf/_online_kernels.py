"""Compiled per-observation update and prediction for the online forest."""

import numpy as np
from numba import njit

from ._tree_kernels import split_decrease

# per-tree routing of one observation
BOTH = 0        # Poisson-bagging mode: counts feed both split choice and prediction
STRUCTURE = 1   # two-stream mode, structure stream
ESTIMATION = 2  # two-stream mode, estimation stream


@njit(cache=True, nogil=True)
def route(feat, thr, left, right, t, x):
    node = 0
    while feat[t, node] >= 0:
        if x[feat[t, node]] <= thr[t, node]:
            node = left[t, node]
        else:
            node = right[t, node]
    return node


@njit(cache=True, nogil=True)
def leaf_class(est, t, node):
    best = 0
    for c in range(1, est.shape[2]):
        if est[t, node, c] > est[t, node, best]:
            best = c
    return best


@njit(cache=True, nogil=True)
def best_candidate(cand_c, t, node):
    n_classes = cand_c.shape[4]
    parent = np.zeros(n_classes)
    total = 0.0
    for c in range(n_classes):
        parent[c] = cand_c[t, node, 0, 0, c] + cand_c[t, node, 0, 1, c]
        total += parent[c]
    best = -1
    best_d = 0.0
    if total <= 0.0:
        return best, best_d
    pg = 0.0
    for c in range(n_classes):
        q = parent[c] / total
        pg += q * q
    pg = 1.0 - pg
    for s in range(cand_c.shape[2]):
        wl = 0.0
        for c in range(n_classes):
            wl += cand_c[t, node, s, 0, c]
        d = split_decrease(pg, cand_c[t, node, s, 0], wl, cand_c[t, node, s, 1], total - wl, total)
        if d > best_d:
            best = s
            best_d = d
    return best, best_d


@njit(cache=True, nogil=True)
def update(x, y, ks, streams, feat, thr, left, right, depth, est, sw, cand_f, cand_t, cand_c,
           cand_e, lo, hi, alpha, beta, max_depth, ready, ready_cand):
    """Apply one observation to every tree; flag leaves whose split trigger fired."""
    n_trees = feat.shape[0]
    n_cand = cand_f.shape[2]
    for t in range(n_trees):
        ready[t] = -1
        k = ks[t]
        if k == 0:
            continue
        mode = streams[t]
        leaf = route(feat, thr, left, right, t, x)
        if mode != STRUCTURE:
            est[t, leaf, y] += k
        if mode == ESTIMATION:
            for s in range(n_cand):
                side = 0 if x[cand_f[t, leaf, s]] <= cand_t[t, leaf, s] else 1
                cand_e[t, leaf, s, side, y] += k
            continue
        sw[t, leaf] += k
        for j in range(x.shape[0]):
            if x[j] < lo[t, leaf, j]:
                lo[t, leaf, j] = x[j]
            if x[j] > hi[t, leaf, j]:
                hi[t, leaf, j] = x[j]
        for s in range(n_cand):
            side = 0 if x[cand_f[t, leaf, s]] <= cand_t[t, leaf, s] else 1
            cand_c[t, leaf, s, side, y] += k
        if sw[t, leaf] < alpha:
            continue
        if max_depth > 0 and depth[t, leaf] >= max_depth:
            continue
        s, d = best_candidate(cand_c, t, leaf)
        if s >= 0 and d >= beta:
            ready[t] = leaf
            ready_cand[t] = s


@njit(cache=True, nogil=True)
def tree_predictions(x, feat, thr, left, right, est, out):
    for t in range(feat.shape[0]):
        out[t] = leaf_class(est, t, route(feat, thr, left, right, t, x))


@njit(cache=True, nogil=True)
def predict_votes(X, feat, thr, left, right, est, n_classes):
    votes = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    for i in range(X.shape[0]):
        for t in range(feat.shape[0]):
            node = route(feat, thr, left, right, t, X[i])
            votes[i, leaf_class(est, t, node)] += 1
    return votes
