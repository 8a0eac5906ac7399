"""Flat-array CART kernels compiled with numba.

Trees are stored as parallel arrays indexed by node id: ``feature`` (-1
marks a leaf), ``threshold``, ``left``, ``right``, ``value`` (mean target
of the node's training rows), and ``cover`` (training-row count including
bootstrap multiplicity). Node 0 is the root; children get ids in
depth-first allocation order. A tree grown on n rows needs at most 2n-1
nodes.

Split search follows variance reduction: candidate thresholds are the
midpoints between consecutive distinct sorted values, the winning split
strictly minimizes the summed child squared error, and ties are broken
toward the lowest feature index, then the lowest threshold (features and
thresholds are scanned in ascending order with strict improvement).

The fit kernel takes the design matrix transposed (d, n) so per-feature
gathers are contiguous. Feature subsampling for forests uses an inline
splitmix64 stream seeded per tree, keeping tree growth independent of
global RNG state.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, inline="always")
def _splitmix_next(state):
    state[0] = (state[0] + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state[0]
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def grow_tree(xt, y, sample_idx, max_depth, min_samples_leaf, max_features, tree_seed):
    """Grow one regression tree on the rows in ``sample_idx``.

    xt: (d, n) transposed design matrix. sample_idx may repeat rows
    (bootstrap multiplicity). max_depth < 0 means unlimited. max_features
    in [1, d] activates per-node feature subsampling when < d.

    Returns (feature, threshold, left, right, value, cover, n_nodes).
    """
    d = xt.shape[0]
    n = sample_idx.shape[0]
    max_nodes = 2 * n - 1 if n > 1 else 1

    feature = np.full(max_nodes, LEAF, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, LEAF, dtype=np.int64)
    right = np.full(max_nodes, LEAF, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)
    cover = np.zeros(max_nodes, dtype=np.float64)

    idx = sample_idx.astype(np.int64).copy()
    scratch = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    ys = np.empty(n, dtype=np.float64)
    perm = np.empty(d, dtype=np.int64)

    # Stack rows: node_id, start, end, depth.
    stack = np.empty((max_nodes, 4), dtype=np.int64)
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = np.uint64(tree_seed)

    n_nodes = 1
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0

    while top >= 0:
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        top -= 1

        cnt = end - start
        s_tot = 0.0
        s2_tot = 0.0
        for i in range(start, end):
            yv = y[idx[i]]
            s_tot += yv
            s2_tot += yv * yv
        mean = s_tot / cnt
        value[node] = mean
        cover[node] = cnt

        parent_sse = s2_tot - s_tot * s_tot / cnt
        if cnt < 2 * min_samples_leaf or cnt < 2:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if parent_sse <= 0.0:
            continue

        # Candidate features, ascending for deterministic tie-breaking.
        if max_features < d:
            for j in range(d):
                perm[j] = j
            for j in range(max_features):
                r = j + np.int64(_splitmix_next(rng) % np.uint64(d - j))
                tmp = perm[j]
                perm[j] = perm[r]
                perm[r] = tmp
            for a in range(1, max_features):
                key = perm[a]
                b = a - 1
                while b >= 0 and perm[b] > key:
                    perm[b + 1] = perm[b]
                    b -= 1
                perm[b + 1] = key
            n_feat = max_features
        else:
            for j in range(d):
                perm[j] = j
            n_feat = d

        best_sse = parent_sse
        best_feat = -1
        best_thr = 0.0

        for fj in range(n_feat):
            f = perm[fj]
            col = xt[f]
            for i in range(cnt):
                vals[i] = col[idx[start + i]]
            order = np.argsort(vals[:cnt])
            s_left = 0.0
            s2_left = 0.0
            for i in range(1, cnt):
                yv = y[idx[start + order[i - 1]]]
                s_left += yv
                s2_left += yv * yv
                v_prev = vals[order[i - 1]]
                v_next = vals[order[i]]
                if v_next == v_prev:
                    continue
                if i < min_samples_leaf or cnt - i < min_samples_leaf:
                    continue
                s_right = s_tot - s_left
                s2_right = s2_tot - s2_left
                sse = (s2_left - s_left * s_left / i) + (
                    s2_right - s_right * s_right / (cnt - i)
                )
                if sse < best_sse:
                    best_sse = sse
                    best_feat = f
                    best_thr = 0.5 * (v_prev + v_next)

        if best_feat < 0:
            continue

        # Stable partition into scratch, left part first.
        col = xt[best_feat]
        n_left = 0
        for i in range(start, end):
            if col[idx[i]] <= best_thr:
                scratch[n_left] = idx[i]
                n_left += 1
        n_right = 0
        for i in range(start, end):
            if col[idx[i]] > best_thr:
                scratch[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(cnt):
            idx[start + i] = scratch[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid

        top += 1
        stack[top, 0] = rid
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        cover[:n_nodes],
        n_nodes,
    )


@njit(cache=True)
def build_sorted_lists(global_order, counts):
    """Per-feature row lists, sorted by feature value, with multiplicity.

    global_order is the (d, n) argsort of each raw feature column; counts
    gives each row's bootstrap multiplicity (0 = out of bag). Emitting rows
    in global sorted order repeated by multiplicity yields sorted lists in
    O(d n) without re-sorting per tree.
    """
    d, n = global_order.shape
    m = 0
    for r in range(n):
        m += counts[r]
    lists = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(n):
            r = global_order[f, i]
            for _ in range(counts[r]):
                lists[f, k] = r
                k += 1
    return lists


@njit(cache=True)
def grow_tree_sorted(xt, y, sorted_lists, max_depth, min_samples_leaf,
                     max_features, tree_seed):
    """Grow a tree from presorted per-feature row lists.

    Equivalent to ``grow_tree`` (same candidate splits, same tie-breaking,
    same traversal order) but avoids per-node sorting: every feature's row
    list stays sorted under the stable left/right partition. The input
    lists are copied, not consumed, so callers can reuse them across
    boosting rounds.
    """
    d = xt.shape[0]
    m = sorted_lists.shape[1]
    max_nodes = 2 * m - 1 if m > 1 else 1

    feature = np.full(max_nodes, LEAF, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, LEAF, dtype=np.int64)
    right = np.full(max_nodes, LEAF, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)
    cover = np.zeros(max_nodes, dtype=np.float64)

    lists = sorted_lists.copy()
    buf_l = np.empty(m, dtype=np.int64)
    buf_r = np.empty(m, dtype=np.int64)
    perm = np.empty(d, dtype=np.int64)

    stack = np.empty((max_nodes, 4), dtype=np.int64)
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = np.uint64(tree_seed)

    n_nodes = 1
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0

    while top >= 0:
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        top -= 1

        cnt = end - start
        s_tot = 0.0
        s2_tot = 0.0
        for i in range(start, end):
            yv = y[lists[0, i]]
            s_tot += yv
            s2_tot += yv * yv
        value[node] = s_tot / cnt
        cover[node] = cnt

        parent_sse = s2_tot - s_tot * s_tot / cnt
        if cnt < 2 * min_samples_leaf or cnt < 2:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if parent_sse <= 0.0:
            continue

        if max_features < d:
            for j in range(d):
                perm[j] = j
            for j in range(max_features):
                r = j + np.int64(_splitmix_next(rng) % np.uint64(d - j))
                tmp = perm[j]
                perm[j] = perm[r]
                perm[r] = tmp
            for a in range(1, max_features):
                key = perm[a]
                b = a - 1
                while b >= 0 and perm[b] > key:
                    perm[b + 1] = perm[b]
                    b -= 1
                perm[b + 1] = key
            n_feat = max_features
        else:
            for j in range(d):
                perm[j] = j
            n_feat = d

        best_sse = parent_sse
        best_feat = -1
        best_thr = 0.0

        for fj in range(n_feat):
            f = perm[fj]
            col = xt[f]
            s_left = 0.0
            s2_left = 0.0
            v_prev = col[lists[f, start]]
            for i in range(start + 1, end):
                yv = y[lists[f, i - 1]]
                s_left += yv
                s2_left += yv * yv
                v_next = col[lists[f, i]]
                if v_next == v_prev:
                    continue
                pos = i - start
                if pos < min_samples_leaf or cnt - pos < min_samples_leaf:
                    v_prev = v_next
                    continue
                s_right = s_tot - s_left
                s2_right = s2_tot - s2_left
                sse = (s2_left - s_left * s_left / pos) + (
                    s2_right - s_right * s_right / (cnt - pos)
                )
                if sse < best_sse:
                    best_sse = sse
                    best_feat = f
                    best_thr = 0.5 * (v_prev + v_next)
                v_prev = v_next

        if best_feat < 0:
            continue

        # Stable partition of every feature list around the chosen split.
        col = xt[best_feat]
        n_left = 0
        for f in range(d):
            nl = 0
            nr = 0
            for i in range(start, end):
                r = lists[f, i]
                if col[r] <= best_thr:
                    buf_l[nl] = r
                    nl += 1
                else:
                    buf_r[nr] = r
                    nr += 1
            for i in range(nl):
                lists[f, start + i] = buf_l[i]
            for i in range(nr):
                lists[f, start + nl + i] = buf_r[i]
            n_left = nl

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid

        top += 1
        stack[top, 0] = rid
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        cover[:n_nodes],
        n_nodes,
    )


@njit(cache=True)
def predict_trees_flat(features, thresholds, lefts, rights, values,
                       tree_starts, weights, base_offset, x_rows):
    """Evaluate a packed ensemble: sum of weighted trees plus an offset.

    Trees are concatenated into flat arrays; tree t occupies nodes
    [tree_starts[t], tree_starts[t+1]) with child ids relative to its own
    start.
    """
    m = x_rows.shape[0]
    n_trees = tree_starts.shape[0] - 1
    out = np.full(m, base_offset, dtype=np.float64)
    for t in range(n_trees):
        base = tree_starts[t]
        w = weights[t]
        for i in range(m):
            node = base
            while features[node] != LEAF:
                if x_rows[i, features[node]] <= thresholds[node]:
                    node = base + lefts[node]
                else:
                    node = base + rights[node]
            out[i] += w * values[node]
    return out


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, x_rows):
    """Evaluate one tree on (m, d) rows."""
    m = x_rows.shape[0]
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        node = 0
        while feature[node] != LEAF:
            if x_rows[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def predict_tree_add(feature, threshold, left, right, value, x_rows, weight, out):
    """Accumulate weight * tree(x) into ``out`` (ensemble evaluation)."""
    m = x_rows.shape[0]
    for i in range(m):
        node = 0
        while feature[node] != LEAF:
            if x_rows[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += weight * value[node]
