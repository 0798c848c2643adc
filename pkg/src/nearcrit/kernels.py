"""Compiled inner loops: union-find labelling, crossing and arm detection.

All kernels work on *local* region indices. ``nbr[c, i, s]`` is the local
index of the ``s``-th neighbour of tile ``i`` under colour-``c`` adjacency,
or -1 when that neighbour is not in the region. Colours are uint8,
1 = blue, 0 = yellow.
"""

import numba as nb
import numpy as np

from .rng import tile_uniform

LEFT, RIGHT, BOTTOM, TOP = 1, 2, 4, 8
INNER, OUTER = 1, 2

EV_ONE_BLUE, EV_ONE_YELLOW, EV_FOUR, EV_FIVE = 1, 2, 4, 8

_jit = nb.njit(cache=True, nogil=True)


@_jit
def find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@_jit
def union(parent, size, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


@_jit
def label(colors, nbr, m, parent, size, skip):
    """Monochromatic clusters of the region, ignoring local tile ``skip``."""
    for i in range(m):
        parent[i] = i
        size[i] = 1
    for i in range(m):
        if i == skip:
            continue
        c = colors[i]
        for s in range(6):
            j = nbr[c, i, s]
            if j > i and j != skip and colors[j] == c:
                union(parent, size, i, j)


@_jit
def crosses(colors, flags, m, parent, color, side_a, side_b, mark, stamp, skip):
    for i in range(m):
        if i != skip and colors[i] == color and flags[color, i] & side_a:
            mark[find(parent, i)] = stamp
    for i in range(m):
        if i != skip and colors[i] == color and flags[color, i] & side_b:
            if mark[find(parent, i)] == stamp:
                return True
    return False


@_jit
def arms_through(colors, nbr, flags, parent, t, color, mark, stamp, rootflags):
    """Union of side flags of ``t`` and of the colour-``color`` clusters adjacent to it.

    Assumes ``label`` was run with ``skip = t``; the colour of ``t`` itself is
    taken to be ``color``.
    """
    acc = flags[color, t]
    for s in range(6):
        j = nbr[color, t, s]
        if j >= 0 and colors[j] == color:
            r = find(parent, j)
            if mark[r] != stamp:
                mark[r] = stamp
                acc |= rootflags[r]
    return acc


@_jit
def cluster_flags(colors, flags, m, parent, rootflags, skip):
    for i in range(m):
        rootflags[i] = 0
    for i in range(m):
        if i != skip:
            rootflags[find(parent, i)] |= flags[colors[i], i]


@_jit
def four_sides(colors, nbr, flags, m, t, parent, size, mark, stamp, rootflags):
    """Return (blue L-R through t, yellow B-T through t, blue L-R avoiding t)."""
    label(colors, nbr, m, parent, size, t)
    cluster_flags(colors, flags, m, parent, rootflags, t)
    fb = arms_through(colors, nbr, flags, parent, t, 1, mark, stamp, rootflags)
    fy = arms_through(colors, nbr, flags, parent, t, 0, mark, stamp + 1, rootflags)
    blue_lr = (fb & LEFT) != 0 and (fb & RIGHT) != 0
    yel_bt = (fy & BOTTOM) != 0 and (fy & TOP) != 0
    without = False
    for i in range(m):
        if i != t and colors[i] == 1 and parent[i] == i:
            f = rootflags[i]
            # rootflags mixes colours only per root; roots are monochromatic
            if (f & LEFT) and (f & RIGHT):
                without = True
                break
    return blue_lr, yel_bt, without


# ---------------------------------------------------------------- rectangles


@_jit
def rect_counts(tiles, nbr, flags, p, seed, stream, rep0, nrep, out):
    """out[r, e]: e = blue-H, blue-V, yellow-H, yellow-V crossing for replicate rep0+r."""
    m = tiles.shape[0]
    colors = np.empty(m, np.uint8)
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    stamp = 0
    for r in range(nrep):
        rep = rep0 + r
        for i in range(m):
            colors[i] = 1 if tile_uniform(seed, stream, rep, tiles[i]) < p[i] else 0
        label(colors, nbr, m, parent, size, -1)
        stamp += 1
        out[r, 0] = crosses(colors, flags, m, parent, 1, LEFT, RIGHT, mark, stamp, -1)
        stamp += 1
        out[r, 1] = crosses(colors, flags, m, parent, 1, BOTTOM, TOP, mark, stamp, -1)
        stamp += 1
        out[r, 2] = crosses(colors, flags, m, parent, 0, LEFT, RIGHT, mark, stamp, -1)
        stamp += 1
        out[r, 3] = crosses(colors, flags, m, parent, 0, BOTTOM, TOP, mark, stamp, -1)


@_jit
def rect_eval(colors, nbr, flags, out):
    m = colors.shape[0]
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    label(colors, nbr, m, parent, size, -1)
    out[0] = crosses(colors, flags, m, parent, 1, LEFT, RIGHT, mark, 1, -1)
    out[1] = crosses(colors, flags, m, parent, 1, BOTTOM, TOP, mark, 2, -1)
    out[2] = crosses(colors, flags, m, parent, 0, LEFT, RIGHT, mark, 3, -1)
    out[3] = crosses(colors, flags, m, parent, 0, BOTTOM, TOP, mark, 4, -1)


@_jit
def rect_batch_eval(states, nbr, flags, color, side_a, side_b, out):
    """Crossing indicator for many explicit colourings (rows of ``states``)."""
    n, m = states.shape
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    colors = np.empty(m, np.uint8)
    for r in range(n):
        for i in range(m):
            colors[i] = states[r, i]
        label(colors, nbr, m, parent, size, -1)
        out[r] = crosses(colors, flags, m, parent, color, side_a, side_b, mark, r + 1, -1)


@_jit
def four_sides_batch(states, nbr, flags, t, out):
    n, m = states.shape
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    rootflags = np.zeros(m, np.int64)
    colors = np.empty(m, np.uint8)
    for r in range(n):
        for i in range(m):
            colors[i] = states[r, i]
        b, y, _ = four_sides(colors, nbr, flags, m, t, parent, size, mark, 2 * r + 1, rootflags)
        out[r] = b and y


@_jit
def rect_coupled_counts(tiles, nbr, flags, p1, p2, seed, stream, rep0, nrep, color, side_a, side_b, out):
    """Per replicate: out[r,0] = omega1 crosses, out[r,1] = omega2 crosses,
    out[r,2] = number of tiles with omega1 blue, omega2 yellow where p2 >= p1."""
    m = tiles.shape[0]
    c1 = np.empty(m, np.uint8)
    c2 = np.empty(m, np.uint8)
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    stamp = 0
    for r in range(nrep):
        rep = rep0 + r
        bad = 0
        for i in range(m):
            u = tile_uniform(seed, stream, rep, tiles[i])
            c1[i] = 1 if u < p1[i] else 0
            c2[i] = 1 if u < p2[i] else 0
            if c1[i] == 1 and c2[i] == 0 and p2[i] >= p1[i]:
                bad += 1
        label(c1, nbr, m, parent, size, -1)
        stamp += 1
        out[r, 0] = crosses(c1, flags, m, parent, color, side_a, side_b, mark, stamp, -1)
        label(c2, nbr, m, parent, size, -1)
        stamp += 1
        out[r, 1] = crosses(c2, flags, m, parent, color, side_a, side_b, mark, stamp, -1)
        out[r, 2] = bad


@_jit
def multi_rect_counts(tiles, nbr, flags, ptr, p, seed, stream, rep0, nrep, out):
    """Blue left-right crossing of each region ``ptr[k]:ptr[k+1]``; out[r, k]."""
    nreg = ptr.shape[0] - 1
    mmax = 0
    for k in range(nreg):
        mmax = max(mmax, ptr[k + 1] - ptr[k])
    colors = np.empty(mmax, np.uint8)
    parent = np.empty(mmax, np.int64)
    size = np.empty(mmax, np.int64)
    mark = np.zeros(mmax, np.int64)
    stamp = 0
    for r in range(nrep):
        rep = rep0 + r
        for k in range(nreg):
            a = ptr[k]
            m = ptr[k + 1] - a
            for i in range(m):
                colors[i] = 1 if tile_uniform(seed, stream, rep, tiles[a + i]) < p[a + i] else 0
            label(colors, nbr[:, a:a + m, :], m, parent, size, -1)
            stamp += 1
            out[r, k] = crosses(colors, flags[:, a:a + m], m, parent, 1, LEFT, RIGHT, mark, stamp, -1)


@_jit
def multi_rect_coupled(tiles, nbr, flags, ptr, p1, p2, seed, stream, rep0, nrep, out1, out2):
    nreg = ptr.shape[0] - 1
    mmax = 0
    for k in range(nreg):
        mmax = max(mmax, ptr[k + 1] - ptr[k])
    c1 = np.empty(mmax, np.uint8)
    c2 = np.empty(mmax, np.uint8)
    parent = np.empty(mmax, np.int64)
    size = np.empty(mmax, np.int64)
    mark = np.zeros(mmax, np.int64)
    stamp = 0
    for r in range(nrep):
        rep = rep0 + r
        for k in range(nreg):
            a = ptr[k]
            m = ptr[k + 1] - a
            for i in range(m):
                u = tile_uniform(seed, stream, rep, tiles[a + i])
                c1[i] = 1 if u < p1[a + i] else 0
                c2[i] = 1 if u < p2[a + i] else 0
            nb_k = nbr[:, a:a + m, :]
            fl_k = flags[:, a:a + m]
            label(c1, nb_k, m, parent, size, -1)
            stamp += 1
            out1[r, k] = crosses(c1, fl_k, m, parent, 1, LEFT, RIGHT, mark, stamp, -1)
            label(c2, nb_k, m, parent, size, -1)
            stamp += 1
            out2[r, k] = crosses(c2, fl_k, m, parent, 1, LEFT, RIGHT, mark, stamp, -1)


@_jit
def pivotal_counts(tiles, nbr, flags, sched, p1, p2, seed, stream, rep0, nrep, a4_hits, per_rep, weight, contrib):
    """Hybrid switch sequence over ``sched`` for each coupled replicate.

    a4_hits[k] counts A4'(t_k) under the hybrid law I_k.
    per_rep[r] = (omega1 crosses, hybrid_K crosses, number of k with a
    no-cross -> cross transition, number of k with A4' and Sw(t_k)).
    contrib[r] = sum over k of weight[k] * [A4'(t_k)] in replicate r.
    """
    m = tiles.shape[0]
    kk = sched.shape[0]
    c1 = np.empty(m, np.uint8)
    c2 = np.empty(m, np.uint8)
    h = np.empty(m, np.uint8)
    parent = np.empty(m, np.int64)
    size = np.empty(m, np.int64)
    mark = np.zeros(m, np.int64)
    rootflags = np.zeros(m, np.int64)
    stamp = 0
    for r in range(nrep):
        rep = rep0 + r
        for i in range(m):
            u = tile_uniform(seed, stream, rep, tiles[i])
            c1[i] = 1 if u < p1[i] else 0
            c2[i] = 1 if u < p2[i] else 0
            h[i] = c1[i]
        label(h, nbr, m, parent, size, -1)
        # four_sides below consumes two stamps per call
        stamp += 2
        first = crosses(h, flags, m, parent, 1, LEFT, RIGHT, mark, stamp, -1)
        prev = first
        trans = 0
        hits = 0
        acc = 0.0
        for k in range(kk):
            t = sched[k]
            h[t] = c2[t]
            stamp += 2
            bl, yl, without = four_sides(h, nbr, flags, m, t, parent, size, mark, stamp, rootflags)
            if bl and yl:
                a4_hits[k] += 1
                acc += weight[k]
                if c1[t] == 0 and c2[t] == 1:
                    hits += 1
            cur = without or (h[t] == 1 and bl)
            if cur and not prev:
                trans += 1
            prev = cur
        per_rep[r, 0] = first
        per_rep[r, 1] = prev
        per_rep[r, 2] = trans
        per_rep[r, 3] = hits
        contrib[r] = acc


# ------------------------------------------------------------------- annuli


@_jit
def _alt4(sc, sl, m, pre, suf):
    for c in range(2):
        pre[0, c, 0] = -1
        pre[0, c, 1] = -1
        suf[m, c, 0] = -1
        suf[m, c, 1] = -1
    for j in range(m):
        for c in range(2):
            pre[j + 1, c, 0] = pre[j, c, 0]
            pre[j + 1, c, 1] = pre[j, c, 1]
        c = sc[j]
        lab = sl[j]
        if pre[j + 1, c, 0] == -1:
            pre[j + 1, c, 0] = lab
        elif pre[j + 1, c, 0] != lab and pre[j + 1, c, 1] == -1:
            pre[j + 1, c, 1] = lab
    for k in range(m - 1, -1, -1):
        for c in range(2):
            suf[k, c, 0] = suf[k + 1, c, 0]
            suf[k, c, 1] = suf[k + 1, c, 1]
        c = sc[k]
        lab = sl[k]
        if suf[k, c, 0] == -1:
            suf[k, c, 0] = lab
        elif suf[k, c, 0] != lab and suf[k, c, 1] == -1:
            suf[k, c, 1] = lab
    for j in range(m):
        for k in range(j + 1, m):
            if sc[j] == sc[k]:
                continue
            c = sc[k]
            c2 = sc[j]
            a0 = pre[j, c, 0]
            if a0 == -1 or (a0 == sl[k] and pre[j, c, 1] == -1):
                continue
            b0 = suf[k + 1, c2, 0]
            if b0 == -1 or (b0 == sl[j] and suf[k + 1, c2, 1] == -1):
                continue
            return True
    return False


@_jit
def _two_disjoint(root, parent, colors, nbr, added, inner, maxnbr, lim, inner_order,
                  inflow, outflow, fstamp, fcur, prev, vis, vcur, queue):
    """At least two tile-disjoint blue paths inside cluster ``root`` from the
    inner boundary to tiles touching the outer boundary at radius ``lim``."""
    found = 0
    for _attempt in range(2):
        vcur += 1
        qh = 0
        qt = 0
        for q in range(inner_order.shape[0]):
            v = inner_order[q]
            if v >= added or colors[v] != 1 or not inner[1, v] or find(parent, v) != root:
                continue
            fin = inflow[v] if fstamp[v] == fcur else -1
            if fin == -2:
                continue
            s = 2 * v
            if vis[s] != vcur:
                vis[s] = vcur
                prev[s] = -1
                queue[qt] = s
                qt += 1
        end = -1
        while qh < qt and end < 0:
            s = queue[qh]
            qh += 1
            v = s >> 1
            fin = inflow[v] if fstamp[v] == fcur else -1
            fout = outflow[v] if fstamp[v] == fcur else -1
            if s & 1 == 0:
                if fin == -1:
                    nxt = 2 * v + 1
                    if vis[nxt] != vcur:
                        vis[nxt] = vcur
                        prev[nxt] = s
                        queue[qt] = nxt
                        qt += 1
                elif fin >= 0:
                    nxt = 2 * fin + 1
                    if vis[nxt] != vcur:
                        vis[nxt] = vcur
                        prev[nxt] = s
                        queue[qt] = nxt
                        qt += 1
            else:
                if maxnbr[1, v] > lim and fout != -3:
                    end = v
                    break
                if fin != -1:
                    nxt = 2 * v
                    if vis[nxt] != vcur:
                        vis[nxt] = vcur
                        prev[nxt] = s
                        queue[qt] = nxt
                        qt += 1
                for sl in range(6):
                    w = nbr[1, v, sl]
                    if w < 0 or w >= added or colors[w] != 1 or fout == w:
                        continue
                    nxt = 2 * w
                    if vis[nxt] != vcur:
                        vis[nxt] = vcur
                        prev[nxt] = s
                        queue[qt] = nxt
                        qt += 1
        if end < 0:
            return found >= 2, vcur
        # augment along the path, walking back from the sink
        if fstamp[end] != fcur:
            fstamp[end] = fcur
            inflow[end] = -1
        outflow[end] = -3
        cur = 2 * end + 1
        while prev[cur] != -1:
            ps = prev[cur]
            a = ps >> 1
            b = cur >> 1
            for x in (a, b):
                if fstamp[x] != fcur:
                    fstamp[x] = fcur
                    inflow[x] = -1
                    outflow[x] = -1
            if a != b:
                if ps & 1 == 1:
                    outflow[a] = b
                    inflow[b] = a
                else:
                    # ps = a_in, cur = b_out: cancel flow b -> a
                    if outflow[b] == a:
                        outflow[b] = -1
                    if inflow[a] == b:
                        inflow[a] = -1
            cur = ps
        v0 = cur >> 1
        if fstamp[v0] != fcur:
            fstamp[v0] = fcur
            outflow[v0] = -1
        inflow[v0] = -2
        found += 1
    return found >= 2, vcur


@_jit
def sweep_scratch(m, ni):
    return (np.empty(m, np.uint8), np.empty(m, np.int64), np.empty(m, np.int64), np.zeros(m, np.int64),
            np.empty(ni, np.int64), np.empty(ni, np.int64), np.empty((ni + 1, 2, 2), np.int64),
            np.empty((ni + 1, 2, 2), np.int64), np.empty(m, np.int64), np.empty(m, np.int64),
            np.zeros(m, np.int64), np.empty(2 * m, np.int64), np.zeros(2 * m, np.int64),
            np.empty(2 * m, np.int64), np.empty(ni, np.int64), np.zeros(3, np.int64))


@_jit
def sweep_one(tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
              p, colors_in, gen, seed, stream, rep, events, tol, out_row, scratch):
    """One replicate of the outward sweep; writes event bitmasks into ``out_row``."""
    (colors, parent, size, mark, sc, sl, pre, suf, inflow, outflow, fstamp, prev, vis, queue, roots,
     ctr) = scratch
    ncp = radii.shape[0]
    ni = inner_order.shape[0]
    added = 0
    alive = events
    for j in range(ncp):
        while added < counts[j]:
            i = added
            if gen:
                colors[i] = 1 if tile_uniform(seed, stream, rep, tiles[i]) < p[i] else 0
            else:
                colors[i] = colors_in[i]
            parent[i] = i
            size[i] = 1
            c = colors[i]
            for s in range(6):
                k = nbr[c, i, s]
                if 0 <= k < i and colors[k] == c:
                    union(parent, size, i, k)
            added += 1
        lim = radii[j] + tol
        ctr[0] += 1
        stamp = ctr[0]
        for q in range(outer_ptr[j], outer_ptr[j + 1]):
            i = outer_idx[q]
            if maxnbr[colors[i], i] > lim:
                mark[find(parent, i)] = stamp
        m_seq = 0
        for q in range(ni):
            i = inner_order[q]
            if i >= added:
                continue
            c = colors[i]
            if not inner[c, i]:
                continue
            rt = find(parent, i)
            if mark[rt] != stamp:
                continue
            if m_seq > 0 and sc[m_seq - 1] == c and sl[m_seq - 1] == rt:
                continue
            sc[m_seq] = c
            sl[m_seq] = rt
            m_seq += 1
        res = 0
        has_b = False
        has_y = False
        for q in range(m_seq):
            if sc[q] == 1:
                has_b = True
            else:
                has_y = True
        if has_b:
            res |= EV_ONE_BLUE
        if has_y:
            res |= EV_ONE_YELLOW
        if alive & (EV_FOUR | EV_FIVE):
            if has_b and has_y and _alt4(sc, sl, m_seq, pre, suf):
                res |= EV_FOUR
                if alive & EV_FIVE:
                    nroots = 0
                    for q in range(m_seq):
                        if sc[q] != 1:
                            continue
                        seen = False
                        for z in range(nroots):
                            if roots[z] == sl[q]:
                                seen = True
                        if not seen:
                            roots[nroots] = sl[q]
                            nroots += 1
                    five = nroots >= 3
                    z = 0
                    while not five and z < nroots:
                        ctr[1] += 1
                        five, vcur = _two_disjoint(roots[z], parent, colors, nbr, added, inner, maxnbr, lim,
                                                   inner_order, inflow, outflow, fstamp, ctr[1], prev, vis,
                                                   ctr[2], queue)
                        ctr[2] = vcur
                        z += 1
                    if five:
                        res |= EV_FIVE
        alive &= res
        if report[j] >= 0:
            out_row[report[j]] = alive
        if alive == 0:
            break


@_jit
def sweep_kernel(tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
                 p, seed, stream, rep0, nrep, events, tol, out):
    """Grow the annulus outward and evaluate arm events at every checkpoint.

    out[r, report[j]] gets a bitmask of the events that hold in the annulus
    ``(r_in, radii[j])`` for replicate ``rep0 + r``. A replicate stops as
    soon as every requested event has failed (all are decreasing in R).
    """
    scratch = sweep_scratch(tiles.shape[0], inner_order.shape[0])
    dummy = np.zeros(1, np.uint8)
    for r in range(nrep):
        sweep_one(tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
                  p, dummy, True, seed, stream, rep0 + r, events, tol, out[r], scratch)


@_jit
def sweep_batch(states, tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
                events, tol, out):
    """Sweep each explicit colouring ``states[r]`` (local order); ``out`` must be zeroed."""
    n, m = states.shape
    scratch = sweep_scratch(m, inner_order.shape[0])
    colors = np.empty(m, np.uint8)
    dummy = np.zeros(1, np.float64)
    for r in range(n):
        for i in range(m):
            colors[i] = states[r, i]
        sweep_one(tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
                  dummy, colors, False, 0, 0, 0, events, tol, out[r], scratch)


@_jit
def sweep_colors(colors_in, tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii,
                 report, events, tol, out_row):
    scratch = sweep_scratch(tiles.shape[0], inner_order.shape[0])
    dummy = np.zeros(1, np.float64)
    sweep_one(tiles, nbr, inner, maxnbr, inner_order, counts, outer_ptr, outer_idx, radii, report,
              dummy, colors_in, False, 0, 0, 0, events, tol, out_row, scratch)
