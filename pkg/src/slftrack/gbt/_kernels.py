"""Compiled inner loops for exact-greedy tree growth and batch prediction.

Layout
------
The column index holds, per feature, the ids of rows with a present value
sorted by that value, and each value's dense rank within the feature
(``uniq[uptr[f] + rank]`` recovers the value). While a tree grows, every
feature's sorted column is kept partitioned into contiguous per-node
segments (double-buffered across levels), so a split scan walks each node's
rows in value order with all accumulators in registers.

With unit Hessians (squared error) Hessian sums equal row counts and
``inv[c] = 1 / (c + lambda)`` replaces the divisions.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def gather(order, v):
    out = np.empty(len(order))
    for j in range(len(order)):
        out[j] = v[order[j]]
    return out


@njit(cache=True)
def present_sums(present, lpos, g, h, unit_h, n_level):
    """Per (node, feature) sums of g, h and counts over rows where the feature is present."""
    n, n_feat = present.shape
    Gp = np.zeros((n_level, n_feat))
    Hp = np.zeros((n_level, n_feat))
    Cp = np.zeros((n_level, n_feat), np.int64)
    for i in range(n):
        nd = lpos[i]
        if nd < 0:
            continue
        gi = g[i]
        hi = 1.0 if unit_h else h[i]
        for f in range(n_feat):
            if present[i, f]:
                Gp[nd, f] += gi
                Hp[nd, f] += hi
                Cp[nd, f] += 1
    return Gp, Hp, Cp


@njit(cache=True)
def node_totals(lpos, g, h, unit_h, n_level):
    Gt = np.zeros(n_level)
    Ht = np.zeros(n_level)
    Ct = np.zeros(n_level, np.int64)
    for i in range(len(lpos)):
        nd = lpos[i]
        if nd >= 0:
            Gt[nd] += g[i]
            Ht[nd] += 1.0 if unit_h else h[i]
            Ct[nd] += 1
    return Gt, Ht, Ct


@njit(cache=True)
def scan_unit(rank, gw, seg_s, seg_e, n_level, Gt, Ct, Gp, Cp, inv, gamma, msl):
    """Best split per node when every Hessian is 1.

    Returns (gain, feature, rank below, rank above, default_left). A
    candidate must beat the incumbent strictly and have gain > 0, so ties
    resolve to the lowest feature, then the lowest threshold, then MISSING-left.
    """
    n_feat = seg_s.shape[0]
    best_gain = np.zeros(n_level)
    best_feat = np.full(n_level, -1, np.int64)
    best_lo = np.zeros(n_level, np.int64)
    best_hi = np.zeros(n_level, np.int64)
    best_dl = np.zeros(n_level, np.bool_)
    for nd in range(n_level):
        gt = Gt[nd]
        ct = Ct[nd]
        if ct < 2 * msl:
            continue
        parent = gt * gt * inv[ct]
        bg = 0.0
        bf = -1
        blo = 0
        bhi = 0
        bd = False
        for f in range(n_feat):
            s = seg_s[f, nd]
            e = seg_e[f, nd]
            if e - s < 2:
                continue
            Gm = gt - Gp[nd, f]
            Cm = ct - Cp[nd, f]
            gl = gw[s]
            cl = 1
            last = rank[s]
            for j in range(s + 1, e):
                x = rank[j]
                if x > last:
                    # MISSING routed left
                    g1 = gl + Gm
                    c1 = cl + Cm
                    g2 = gt - g1
                    if c1 >= msl and ct - c1 >= msl:
                        gain = 0.5 * (g1 * g1 * inv[c1] + g2 * g2 * inv[ct - c1] - parent) - gamma
                        if gain > bg:
                            bg, bf, blo, bhi, bd = gain, f, last, x, True
                    # MISSING routed right; identical to the above when nothing is missing
                    if Cm > 0 and cl >= msl and ct - cl >= msl:
                        g2 = gt - gl
                        gain = 0.5 * (gl * gl * inv[cl] + g2 * g2 * inv[ct - cl] - parent) - gamma
                        if gain > bg:
                            bg, bf, blo, bhi, bd = gain, f, last, x, False
                gl += gw[j]
                cl += 1
                last = x
        best_gain[nd] = bg
        best_feat[nd] = bf
        best_lo[nd] = blo
        best_hi[nd] = bhi
        best_dl[nd] = bd
    return best_gain, best_feat, best_lo, best_hi, best_dl


@njit(cache=True)
def scan_general(rank, gw, hw, seg_s, seg_e, n_level, Gt, Ht, Ct, Gp, Hp, Cp, lam, gamma, msl):
    """As :func:`scan_unit` for arbitrary non-negative Hessians."""
    n_feat = seg_s.shape[0]
    best_gain = np.zeros(n_level)
    best_feat = np.full(n_level, -1, np.int64)
    best_lo = np.zeros(n_level, np.int64)
    best_hi = np.zeros(n_level, np.int64)
    best_dl = np.zeros(n_level, np.bool_)
    for nd in range(n_level):
        gt = Gt[nd]
        ht = Ht[nd]
        ct = Ct[nd]
        if ct < 2 * msl or not ht + lam > 0:
            continue
        parent = gt * gt / (ht + lam)
        bg = 0.0
        bf = -1
        blo = 0
        bhi = 0
        bd = False
        for f in range(n_feat):
            s = seg_s[f, nd]
            e = seg_e[f, nd]
            if e - s < 2:
                continue
            Gm = gt - Gp[nd, f]
            Hm = ht - Hp[nd, f]
            Cm = ct - Cp[nd, f]
            gl = gw[s]
            hl = hw[s]
            cl = 1
            last = rank[s]
            for j in range(s + 1, e):
                x = rank[j]
                if x > last:
                    g1 = gl + Gm
                    h1 = hl + Hm
                    c1 = cl + Cm
                    g2 = gt - g1
                    h2 = ht - h1
                    if c1 >= msl and ct - c1 >= msl and h1 + lam > 0 and h2 + lam > 0:
                        gain = 0.5 * (g1 * g1 / (h1 + lam) + g2 * g2 / (h2 + lam) - parent) - gamma
                        if gain > bg:
                            bg, bf, blo, bhi, bd = gain, f, last, x, True
                    g2 = gt - gl
                    h2 = ht - hl
                    if Cm > 0 and cl >= msl and ct - cl >= msl and hl + lam > 0 and h2 + lam > 0:
                        gain = 0.5 * (gl * gl / (hl + lam) + g2 * g2 / (h2 + lam) - parent) - gamma
                        if gain > bg:
                            bg, bf, blo, bhi, bd = gain, f, last, x, False
                gl += gw[j]
                hl += hw[j]
                cl += 1
                last = x
        best_gain[nd] = bg
        best_feat[nd] = bf
        best_lo[nd] = blo
        best_hi[nd] = bhi
        best_dl[nd] = bd
    return best_gain, best_feat, best_lo, best_hi, best_dl


@njit(cache=True)
def threshold(uniq, uptr, f, lo, hi):
    a = uniq[uptr[f] + lo]
    b = uniq[uptr[f] + hi]
    t = 0.5 * (a + b)
    # adjacent doubles: the midpoint may round onto a; b still separates them
    return t if t > a else b


@njit(cache=True)
def best_splits(rank, gw, hw, unit_h, seg_s, seg_e, n_level, Gt, Ht, Ct, Gp, Hp, Cp, inv, lam, gamma, msl,
                uniq, uptr):
    if unit_h:
        gain, bf, lo, hi, bd = scan_unit(rank, gw, seg_s, seg_e, n_level, Gt, Ct, Gp, Cp, inv, gamma, msl)
    else:
        gain, bf, lo, hi, bd = scan_general(rank, gw, hw, seg_s, seg_e, n_level, Gt, Ht, Ct, Gp, Hp, Cp,
                                            lam, gamma, msl)
    bt = np.zeros(n_level)
    for nd in range(n_level):
        if bf[nd] >= 0:
            bt[nd] = threshold(uniq, uptr, bf[nd], lo[nd], hi[nd])
    return gain, bf, bt, bd


@njit(cache=True)
def partition(ridx, rank, gw, hw, unit_h, seg_s, seg_e, lpos, n_level, child, ns, out_r, out_v, out_g, out_h):
    """Stable split of every split node's segments into its two children's segments."""
    n_feat = seg_s.shape[0]
    for f in range(n_feat):
        for nd in range(n_level):
            c0 = child[nd]
            if c0 < 0:
                continue
            a = ns[f, c0]
            b = ns[f, c0 + 1]
            for j in range(seg_s[f, nd], seg_e[f, nd]):
                r = ridx[j]
                right = lpos[r] - c0
                p = b if right else a
                out_r[p] = r
                out_v[p] = rank[j]
                out_g[p] = gw[j]
                if not unit_h:
                    out_h[p] = hw[j]
                a += 1 - right
                b += right


@njit(cache=True)
def grow_tree(X, present, order, rank, fptr, uniq, uptr, g, h, unit_h, inv, lpos, max_depth, lam, gamma, msl,
              cap, r0, v0, g0, h0, r1, v1, g1, h1):
    """Grow one tree; returns flat node arrays and the leaf id of every row.

    ``lpos`` (all zeros: every row at the root) and the two segment buffers
    ``(r, v, g, h)`` are caller-allocated scratch.
    """
    n = X.shape[0]
    n_feat = len(fptr) - 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    dl = np.zeros(cap, np.bool_)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    weight = np.zeros(cap)
    leaf = np.full(n, -1, np.int64)

    cur_r = order
    cur_v = rank
    cur_g = gather(order, g)
    cur_h = cur_g if unit_h else gather(order, h)
    seg_s = np.empty((n_feat, 1), np.int64)
    seg_e = np.empty((n_feat, 1), np.int64)
    for f in range(n_feat):
        seg_s[f, 0] = fptr[f]
        seg_e[f, 0] = fptr[f + 1]

    level_ids = np.zeros(1, np.int64)
    Gt, Ht, Ct = node_totals(lpos, g, h, unit_h, 1)
    Gp, Hp, Cp = present_sums(present, lpos, g, h, unit_h, 1)
    n_nodes = 1
    depth = 0
    flip = 0
    while True:
        L = len(level_ids)
        if depth < max_depth:
            _, bf, bt, bd = best_splits(cur_v, cur_g, cur_h, unit_h, seg_s, seg_e, L, Gt, Ht, Ct, Gp, Hp, Cp,
                                        inv, lam, gamma, msl, uniq, uptr)
        else:
            bf = np.full(L, -1, np.int64)
            bt = np.zeros(L)
            bd = np.zeros(L, np.bool_)
        child = np.full(L, -1, np.int64)
        next_ids = np.empty(2 * L, np.int64)
        m = 0
        for nd in range(L):
            gid = level_ids[nd]
            if bf[nd] >= 0:
                feat[gid] = bf[nd]
                thr[gid] = bt[nd]
                dl[gid] = bd[nd]
                left[gid] = n_nodes
                right[gid] = n_nodes + 1
                next_ids[m] = n_nodes
                next_ids[m + 1] = n_nodes + 1
                child[nd] = m
                m += 2
                n_nodes += 2
            elif Ht[nd] + lam > 0:
                weight[gid] = -Gt[nd] / (Ht[nd] + lam)
        # children at max_depth can never split: settle their rows directly
        final = depth + 1 >= max_depth
        nGt = np.zeros(m)
        nHt = np.zeros(m)
        nCt = np.zeros(m, np.int64)
        for i in range(n):
            nd = lpos[i]
            if nd < 0:
                continue
            if bf[nd] < 0:
                leaf[i] = level_ids[nd]
                lpos[i] = -1
                continue
            x = X[i, bf[nd]]
            if np.isnan(x):
                c = child[nd] if bd[nd] else child[nd] + 1
            elif x < bt[nd]:
                c = child[nd]
            else:
                c = child[nd] + 1
            nGt[c] += g[i]
            nHt[c] += 1.0 if unit_h else h[i]
            nCt[c] += 1
            if final:
                leaf[i] = next_ids[c]
                lpos[i] = -1
            else:
                lpos[i] = c
        if m == 0:
            break
        if not final:
            Gp, Hp, Cp = present_sums(present, lpos, g, h, unit_h, m)
            ns = np.empty((n_feat, m), np.int64)
            ne = np.empty((n_feat, m), np.int64)
            p = 0
            for f in range(n_feat):
                for c in range(m):
                    ns[f, c] = p
                    p += Cp[c, f]
                    ne[f, c] = p
            if flip == 0:
                partition(cur_r, cur_v, cur_g, cur_h, unit_h, seg_s, seg_e, lpos, L, child, ns, r0, v0, g0, h0)
                cur_r, cur_v, cur_g = r0, v0, g0
                cur_h = g0 if unit_h else h0
            else:
                partition(cur_r, cur_v, cur_g, cur_h, unit_h, seg_s, seg_e, lpos, L, child, ns, r1, v1, g1, h1)
                cur_r, cur_v, cur_g = r1, v1, g1
                cur_h = g1 if unit_h else h1
            flip = 1 - flip
            seg_s = ns
            seg_e = ne
        level_ids = next_ids[:m].copy()
        Gt, Ht, Ct = nGt, nHt, nCt
        depth += 1
    return feat[:n_nodes], thr[:n_nodes], dl[:n_nodes], left[:n_nodes], right[:n_nodes], weight[:n_nodes], leaf


@njit(cache=True)
def predict_batch(X, feat, thr, dl, left, right, weight, roots, eta, base):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for r in range(len(roots)):
            nd = roots[r]
            while feat[nd] >= 0:
                x = X[i, feat[nd]]
                if np.isnan(x):
                    nd = left[nd] if dl[nd] else right[nd]
                elif x < thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            s += weight[nd]
        out[i] = base + eta * s
    return out
