"""Hot numeric kernels: CART growth, batch tree traversal, rank-based AUC.

Every kernel exists twice: ``_<name>_py`` is the plain-python source and
``<name>`` the njit-compiled version (or the same function again when
numba is missing or disabled, see :mod:`walkforest._backend`).  Both run
the identical source, so results match bit for bit either way.
"""

import numpy as np

from ._backend import jit

# Node array layout: feature[i] < 0 marks a leaf; rows route left while
# value <= threshold.  gain[i] is the split's Gini gain on the samples
# with an observed value for the split feature.


def _bootstrap_order_py(order_full, counts, m):
    # Sorted bootstrap order from a presorted full-sample order: walk each
    # feature's order emitting every row index `counts[row]` times.  Row
    # indices repeat; equal-value runs stay contiguous, which is all the
    # grow kernel relies on.
    p, n = order_full.shape
    out = np.empty((p, m), np.int64)
    for j in range(p):
        w = 0
        for ii in range(n):
            idx = order_full[j, ii]
            for _ in range(counts[idx]):
                out[j, w] = idx
                w += 1
    return out


def _grow_tree_ordered_py(X, y, order, min_leaf, max_depth, min_gain):
    # X: (n_rows, p) float64, NaN = missing; y: (n_rows,) int8 in {0, 1}.
    # order: (p, m) per-feature sorted sample indices into X (repeats
    # allowed for bootstrap multiplicity; NaN values sorted last).
    # max_depth < 0 means unlimited.
    # Candidate thresholds are midpoints of adjacent distinct observed
    # values; samples missing a feature are excluded from that feature's
    # scan and routed to the child that received more observed samples.
    # Gain ties resolve to the lowest feature index, then lowest threshold.
    n_rows, p = X.shape
    m_total = order.shape[1]
    max_nodes = 2 * m_total + 1

    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.full(max_nodes, np.nan, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    count0 = np.zeros(max_nodes, np.int64)
    count1 = np.zeros(max_nodes, np.int64)
    gain = np.zeros(max_nodes, np.float64)

    order = order.copy()  # partitioned in place

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m_total
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    go_left = np.empty(n_rows, np.uint8)  # routing flag indexed by sample row
    tmp = np.empty(m_total, np.int64)

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo

        c0 = 0
        c1 = 0
        for ii in range(lo, hi):
            if y[order[0, ii]] == 0:
                c0 += 1
            else:
                c1 += 1
        count0[node] = c0
        count1[node] = c1

        if c0 == 0 or c1 == 0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if m < 2 * min_leaf:
            continue

        best_gain = -1.0
        best_j = -1
        best_thr = 0.0
        best_nl = 0
        best_nr = 0

        for j in range(p):
            # Observed entries come first in the sorted segment.
            nm = 0
            t0 = 0
            t1 = 0
            for ii in range(lo, hi):
                idx = order[j, ii]
                if np.isnan(X[idx, j]):
                    break
                nm += 1
                if y[idx] == 0:
                    t0 += 1
                else:
                    t1 += 1
            if nm < 2 * min_leaf:
                continue
            total = float(nm)
            p0 = t0 / total
            p1 = t1 / total
            parent_gini = p0 * (1.0 - p0) + p1 * (1.0 - p1)

            c0l = 0
            c1l = 0
            for ii in range(lo, lo + nm - 1):
                idx = order[j, ii]
                if y[idx] == 0:
                    c0l += 1
                else:
                    c1l += 1
                v = X[idx, j]
                vnext = X[order[j, ii + 1], j]
                if v == vnext:
                    continue
                nl = c0l + c1l
                nr = nm - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                c0r = t0 - c0l
                c1r = t1 - c1l
                pl0 = c0l / nl
                pl1 = c1l / nl
                gl = pl0 * (1.0 - pl0) + pl1 * (1.0 - pl1)
                pr0 = c0r / nr
                pr1 = c1r / nr
                gr = pr0 * (1.0 - pr0) + pr1 * (1.0 - pr1)
                g = parent_gini - (nl / total) * gl - (nr / total) * gr
                if g > best_gain:
                    thr = 0.5 * (v + vnext)
                    if thr >= vnext:  # midpoint collapsed onto the upper value
                        thr = v
                    best_gain = g
                    best_j = j
                    best_thr = thr
                    best_nl = nl
                    best_nr = nr

        if best_j < 0 or best_gain < min_gain:
            continue

        missing_left = best_nl >= best_nr

        n_left = 0
        for ii in range(lo, hi):
            idx = order[0, ii]
            v = X[idx, best_j]
            if np.isnan(v):
                flag = 1 if missing_left else 0
            elif v <= best_thr:
                flag = 1
            else:
                flag = 0
            go_left[idx] = flag
            n_left += flag

        # Stable partition of every feature's segment into left | right.
        for j in range(p):
            wl = 0
            wr = n_left
            for ii in range(lo, hi):
                idx = order[j, ii]
                if go_left[idx] == 1:
                    tmp[wl] = idx
                    wl += 1
                else:
                    tmp[wr] = idx
                    wr += 1
            for ii in range(m):
                order[j, lo + ii] = tmp[ii]

        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = best_j
        threshold[node] = best_thr
        left[node] = lchild
        right[node] = rchild
        gain[node] = best_gain

        mid = lo + n_left
        stack_node[sp] = rchild
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lchild
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        count0[:n_nodes].copy(),
        count1[:n_nodes].copy(),
        gain[:n_nodes].copy(),
    )


def _predict_rows_py(feature, threshold, left, right, count0, count1, X):
    # Missing values route to the child holding more training samples
    # (ties go left).
    n = X.shape[0]
    out = np.empty(n, np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            if np.isnan(v):
                lc = count0[left[node]] + count1[left[node]]
                rc = count0[right[node]] + count1[right[node]]
                node = left[node] if lc >= rc else right[node]
            elif v <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = count1[node] / (count0[node] + count1[node])
    return out


def _rank_auc_py(scores, labels):
    # Mann-Whitney AUC with midrank tie handling; NaN for single-class input.
    n = scores.size
    npos = 0
    for i in range(n):
        if labels[i] == 1:
            npos += 1
    nneg = n - npos
    if npos == 0 or nneg == 0:
        return np.nan
    order = np.argsort(scores, kind="mergesort")
    rank_sum_pos = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            if labels[order[k]] == 1:
                rank_sum_pos += avg_rank
        i = j + 1
    u = rank_sum_pos - 0.5 * npos * (npos + 1)
    return u / (npos * nneg)


def _presort_py(X):
    # stable per-feature order with NaN sorted last (+inf key)
    n, p = X.shape
    order = np.empty((p, n), np.int64)
    key = np.empty(n, np.float64)
    for j in range(p):
        for i in range(n):
            v = X[i, j]
            key[i] = np.inf if np.isnan(v) else v
        order[j, :] = np.argsort(key, kind="mergesort")
    return order


bootstrap_order = jit(_bootstrap_order_py)
grow_tree_ordered = jit(_grow_tree_ordered_py)
presort = jit(_presort_py)
predict_rows = jit(_predict_rows_py)
rank_auc = jit(_rank_auc_py)


def grow_tree(X, y, min_leaf, max_depth, min_gain):
    """Presort the features, then grow; one-shot path for uncached fits."""
    return grow_tree_ordered(X, y, presort(X), min_leaf, max_depth, min_gain)
