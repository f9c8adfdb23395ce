"""Compiled inner loops for histogram tree growth.

Conventions shared with :mod:`poolbench.qboost.tree`:

* ``binned`` is an (n_rows, n_features) int32 matrix of bin codes.
* A histogram is an (n_features, n_bins_max, 3) float64 array holding
  (sum g, sum h, count) per bin.
* Category masks hold 0 (absent at this node), 1 (left) or 2 (right).
* Child pointers >= 0 are internal nodes; ``~j`` (negative) is leaf ``j``.
"""

import numpy as np
from numba import njit

GAIN_TOL = 1e-12
NEG_INF = -np.inf


@njit(cache=True)
def build_hist(binned, rows, start, end, g, h, out):
    out[:] = 0.0
    n_feat = binned.shape[1]
    for k in range(start, end):
        r = rows[k]
        gr = g[r]
        hr = h[r]
        for f in range(n_feat):
            b = binned[r, f]
            out[f, b, 0] += gr
            out[f, b, 1] += hr
            out[f, b, 2] += 1.0


@njit(cache=True)
def _score(G, H, lam):
    return G * G / (H + lam)


@njit(cache=True)
def best_split(hist, nbins, cards, lam, gamma, min_leaf, max_exhaustive, cat_l2, cat_smooth, min_group, mask_out):
    """Best split over all features of one node.

    Returns (gain, feature, bin). For numeric features ``bin`` is the last bin
    sent left; for categorical features it is the candidate ordinal (subset
    mask index or prefix length) and ``mask_out`` receives the partition.
    ``gain`` is -inf when no split has positive gain. Categorical splits use
    L2 penalty ``lam + cat_l2``; categories with fewer than ``min_group`` rows
    are never candidates for the left side.
    """
    n_feat = hist.shape[0]
    G = 0.0
    H = 0.0
    C = 0.0
    for b in range(nbins[0]):
        G += hist[0, b, 0]
        H += hist[0, b, 1]
        C += hist[0, b, 2]
    best_gain = NEG_INF
    best_f = -1
    best_b = -1
    if C < 2 * min_leaf:
        return best_gain, best_f, best_b
    parent = _score(G, H, lam)

    for f in range(n_feat):
        nb = nbins[f]
        if cards[f] == 0:
            GL = 0.0
            HL = 0.0
            CL = 0.0
            for b in range(nb - 1):
                GL += hist[f, b, 0]
                HL += hist[f, b, 1]
                CL += hist[f, b, 2]
                if CL < min_leaf:
                    continue
                if C - CL < min_leaf:
                    break
                gain = 0.5 * (_score(GL, HL, lam) + _score(G - GL, H - HL, lam) - parent) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = b
            continue

        lam_c = lam + cat_l2
        parent_c = _score(G, H, lam_c)
        present = np.empty(nb, dtype=np.int64)
        m = 0
        for c in range(nb):
            if hist[f, c, 2] >= min_group:
                present[m] = c
                m += 1
        # rare categories always go right, as one pooled group
        G_rare = 0.0
        H_rare = 0.0
        C_rare = 0.0
        for c in range(nb):
            cnt = hist[f, c, 2]
            if cnt > 0 and cnt < min_group:
                G_rare += hist[f, c, 0]
                H_rare += hist[f, c, 1]
                C_rare += cnt
        if C_rare > 0:
            m_eff = m + 1
        else:
            m_eff = m
        if m_eff < 2 or m < 1:
            continue
        if m_eff <= max_exhaustive:
            # every bipartition; the last group (rare pool, else last present
            # category) is pinned right
            n_free = m if C_rare > 0 else m - 1
            for s in range(1, 1 << n_free):
                GL = 0.0
                HL = 0.0
                CL = 0.0
                for j in range(n_free):
                    if (s >> j) & 1:
                        c = present[j]
                        GL += hist[f, c, 0]
                        HL += hist[f, c, 1]
                        CL += hist[f, c, 2]
                if CL < min_leaf or C - CL < min_leaf:
                    continue
                gain = 0.5 * (_score(GL, HL, lam_c) + _score(G - GL, H - HL, lam_c) - parent_c) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = s
                    _fill_mask(hist, f, nb, mask_out)
                    for j in range(n_free):
                        if (s >> j) & 1:
                            mask_out[present[j]] = 1
        else:
            ratio = np.empty(m)
            for j in range(m):
                c = present[j]
                ratio[j] = hist[f, c, 0] / (hist[f, c, 1] + cat_smooth)
            order = np.argsort(ratio, kind="mergesort")
            GL = 0.0
            HL = 0.0
            CL = 0.0
            n_scan = m if C_rare > 0 else m - 1
            for j in range(n_scan):
                c = present[order[j]]
                GL += hist[f, c, 0]
                HL += hist[f, c, 1]
                CL += hist[f, c, 2]
                if CL < min_leaf:
                    continue
                if C - CL < min_leaf:
                    break
                gain = 0.5 * (_score(GL, HL, lam_c) + _score(G - GL, H - HL, lam_c) - parent_c) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = j + 1
                    _fill_mask(hist, f, nb, mask_out)
                    for jj in range(j + 1):
                        mask_out[present[order[jj]]] = 1
    # gains below this are float noise from summing equal gradients
    if best_gain <= GAIN_TOL * (H + 1.0):
        return NEG_INF, -1, -1
    return best_gain, best_f, best_b


@njit(cache=True)
def _fill_mask(hist, f, nb, mask_out):
    # every category seen at this node starts on the right
    mask_out[:] = 0
    for c in range(nb):
        if hist[f, c, 2] > 0:
            mask_out[c] = 2


@njit(cache=True)
def grow_tree(
    binned, g, h, nbins, cards, edges, num_leaves, lam, gamma, min_leaf, max_exhaustive,
    cat_l2, cat_smooth, min_group,
):
    n = binned.shape[0]
    n_feat = binned.shape[1]
    B = hist_width(nbins)
    W = mask_width(cards)

    order = np.arange(n)
    tmp = np.empty(n, dtype=np.int64)
    leaf_start = np.zeros(num_leaves, dtype=np.int64)
    leaf_end = np.zeros(num_leaves, dtype=np.int64)
    leaf_end[0] = n
    hists = np.zeros((num_leaves, n_feat, B, 3))
    split_gain = np.full(num_leaves, NEG_INF)
    split_feat = np.full(num_leaves, -1, dtype=np.int64)
    split_bin = np.full(num_leaves, -1, dtype=np.int64)
    split_mask = np.zeros((num_leaves, W), dtype=np.int8)
    # where each leaf hangs: parent node (-1 = root) and side
    leaf_parent = np.full(num_leaves, -1, dtype=np.int64)
    leaf_is_left = np.zeros(num_leaves, dtype=np.bool_)

    n_nodes_max = max(num_leaves - 1, 1)
    node_feat = np.full(n_nodes_max, -1, dtype=np.int64)
    node_thr = np.zeros(n_nodes_max)
    node_left = np.zeros(n_nodes_max, dtype=np.int64)
    node_right = np.zeros(n_nodes_max, dtype=np.int64)
    node_default_left = np.zeros(n_nodes_max, dtype=np.bool_)
    node_mask = np.zeros((n_nodes_max, W), dtype=np.int8)
    node_gain = np.zeros(n_nodes_max)

    build_hist(binned, order, 0, n, g, h, hists[0])
    mbuf = np.zeros(W, dtype=np.int8)
    if num_leaves > 1:
        gn, fb, bb = best_split(
            hists[0], nbins, cards, lam, gamma, min_leaf, max_exhaustive, cat_l2, cat_smooth, min_group, mbuf
        )
        split_gain[0] = gn
        split_feat[0] = fb
        split_bin[0] = bb
        split_mask[0] = mbuf

    n_leaves = 1
    n_nodes = 0
    while n_leaves < num_leaves:
        j = -1
        best = 0.0
        for k in range(n_leaves):
            if split_gain[k] > best:
                best = split_gain[k]
                j = k
        if j < 0:
            break
        f = split_feat[j]
        b = split_bin[j]
        s, e = leaf_start[j], leaf_end[j]
        # stable partition of the leaf's rows
        nl = 0
        nr = 0
        for k in range(s, e):
            r = order[k]
            code = binned[r, f]
            if cards[f] == 0:
                go_left = code <= b
            else:
                go_left = split_mask[j, code] == 1
            if go_left:
                order[s + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for k in range(nr):
            order[s + nl + k] = tmp[k]

        new = n_leaves
        node = n_nodes
        node_feat[node] = f
        node_gain[node] = split_gain[j]
        if cards[f] == 0:
            node_thr[node] = edges[f, b + 1]
        else:
            node_mask[node] = split_mask[j]
        node_left[node] = ~j
        node_right[node] = ~new
        node_default_left[node] = nl >= nr
        p = leaf_parent[j]
        if p >= 0:
            if leaf_is_left[j]:
                node_left[p] = node
            else:
                node_right[p] = node
        leaf_parent[j] = node
        leaf_is_left[j] = True
        leaf_parent[new] = node
        leaf_is_left[new] = False
        n_nodes += 1

        leaf_start[new] = s + nl
        leaf_end[new] = e
        leaf_end[j] = s + nl
        # histogram subtraction: build the smaller child, derive the other
        parent_hist = hists[j].copy()
        if nl <= nr:
            build_hist(binned, order, s, s + nl, g, h, hists[j])
            hists[new] = parent_hist - hists[j]
        else:
            build_hist(binned, order, s + nl, e, g, h, hists[new])
            hists[j] = parent_hist - hists[new]
        n_leaves += 1
        for leaf in (j, new):
            gn, fb, bb = best_split(
                hists[leaf], nbins, cards, lam, gamma, min_leaf, max_exhaustive, cat_l2, cat_smooth, min_group, mbuf
            )
            split_gain[leaf] = gn
            split_feat[leaf] = fb
            split_bin[leaf] = bb
            split_mask[leaf] = mbuf

    leaf_G = np.zeros(n_leaves)
    leaf_H = np.zeros(n_leaves)
    leaf_C = np.zeros(n_leaves, dtype=np.int64)
    leaf_of_row = np.empty(n, dtype=np.int64)
    for leaf in range(n_leaves):
        for k in range(leaf_start[leaf], leaf_end[leaf]):
            r = order[k]
            leaf_G[leaf] += g[r]
            leaf_H[leaf] += h[r]
            leaf_of_row[r] = leaf
        leaf_C[leaf] = leaf_end[leaf] - leaf_start[leaf]
    return (
        node_feat[:n_nodes],
        node_thr[:n_nodes],
        node_left[:n_nodes],
        node_right[:n_nodes],
        node_default_left[:n_nodes],
        node_mask[:n_nodes],
        node_gain[:n_nodes],
        leaf_G,
        leaf_H,
        leaf_C,
        leaf_of_row,
    )


@njit(cache=True)
def hist_width(nbins):
    B = 1
    for v in nbins:
        if v > B:
            B = v
    return B


@njit(cache=True)
def mask_width(cards):
    W = 1
    for v in cards:
        if v > W:
            W = v
    return W


@njit(cache=True)
def leaf_quantiles(resid, leaf_of_row, n_leaves, tau):
    """Per-leaf lower tau-quantile (inverted empirical CDF) of residuals.

    This value minimises the leaf's pinball loss over a constant shift.
    """
    counts = np.zeros(n_leaves, dtype=np.int64)
    for r in range(resid.shape[0]):
        counts[leaf_of_row[r]] += 1
    offs = np.zeros(n_leaves + 1, dtype=np.int64)
    for j in range(n_leaves):
        offs[j + 1] = offs[j] + counts[j]
    buf = np.empty(resid.shape[0])
    fill = offs[:-1].copy()
    for r in range(resid.shape[0]):
        j = leaf_of_row[r]
        buf[fill[j]] = resid[r]
        fill[j] += 1
    out = np.zeros(n_leaves)
    for j in range(n_leaves):
        c = counts[j]
        if c == 0:
            continue
        seg = np.sort(buf[offs[j] : offs[j + 1]])
        k = int(np.ceil(c * tau - 1e-12))
        if k < 1:
            k = 1
        out[j] = seg[k - 1]
    return out


@njit(cache=True)
def predict_tree(X, feat, is_cat, thr, left, right, default_left, mask, leaf_value, scale, out):
    n = X.shape[0]
    if feat.shape[0] == 0:
        for i in range(n):
            out[i] += scale * leaf_value[0]
        return
    W = mask.shape[1]
    for i in range(n):
        node = 0
        while node >= 0:
            x = X[i, feat[node]]
            if is_cat[node]:
                c = int(x) if x >= 0 else -1
                if c < 0 or c >= W or mask[node, c] == 0:
                    go_left = default_left[node]
                else:
                    go_left = mask[node, c] == 1
            else:
                go_left = x < thr[node]
            node = left[node] if go_left else right[node]
        out[i] += scale * leaf_value[~node]
