"""Compiled inner loops: double-double prefix sums, box gathers, sliding maxima and chain DPs.

Everything here works on plain contiguous arrays; the public modules own the
geometry (origins, boxes, padding) and call in with row-major views.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


@njit(cache=True, inline="always")
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e += al + bl
    h = s + e
    return h, e - (h - s)


@njit(cache=True)
def dd_prefix_rows(hi, lo):
    """Exclusive running sums along the last axis of a 2-D array pair, in double-double."""
    rows, n = hi.shape
    out_hi = np.zeros((rows, n + 1))
    out_lo = np.zeros((rows, n + 1))
    for r in range(rows):
        sh = 0.0
        sl = 0.0
        for j in range(n):
            sh, sl = _dd_add(sh, sl, hi[r, j], lo[r, j])
            out_hi[r, j + 1] = sh
            out_lo[r, j + 1] = sl
    return out_hi, out_lo


@njit(cache=True)
def box_sums_1d(th, tl, a0, b0):
    """Double-double box sums from a prefix table: returns the (hi, lo) pair."""
    m0 = a0.shape[0]
    out = np.empty(m0)
    err = np.empty(m0)
    for i in range(m0):
        h, l = _dd_add(th[b0[i]], tl[b0[i]], -th[a0[i]], -tl[a0[i]])
        out[i] = h
        err[i] = l
    return out, err


@njit(cache=True)
def box_sums_2d(th, tl, a0, b0, a1, b1):
    m0 = a0.shape[0]
    m1 = a1.shape[0]
    out = np.empty((m0, m1))
    err = np.empty((m0, m1))
    for i in range(m0):
        p = a0[i]
        q = b0[i]
        for j in range(m1):
            u = a1[j]
            v = b1[j]
            h, l = _dd_add(th[q, v], tl[q, v], -th[p, v], -tl[p, v])
            h, l = _dd_add(h, l, -th[q, u], -tl[q, u])
            h, l = _dd_add(h, l, th[p, u], tl[p, u])
            out[i, j] = h
            err[i, j] = l
    return out, err


@njit(cache=True)
def box_sums_3d(th, tl, a0, b0, a1, b1, a2, b2):
    m0 = a0.shape[0]
    m1 = a1.shape[0]
    m2 = a2.shape[0]
    out = np.empty((m0, m1, m2))
    err = np.empty((m0, m1, m2))
    for i in range(m0):
        for j in range(m1):
            for k in range(m2):
                h = 0.0
                l = 0.0
                for c in range(8):
                    x = b0[i] if c & 1 == 0 else a0[i]
                    y = b1[j] if c & 2 == 0 else a1[j]
                    z = b2[k] if c & 4 == 0 else a2[k]
                    sign = 1.0
                    if c & 1:
                        sign = -sign
                    if c & 2:
                        sign = -sign
                    if c & 4:
                        sign = -sign
                    h, l = _dd_add(h, l, sign * th[x, y, z], sign * tl[x, y, z])
                out[i, j, k] = h
                err[i, j, k] = l
    return out, err


@njit(cache=True)
def sliding_max_rows(a, w):
    """Forward-window maxima: out[r, i] = max(a[r, i:i+w]). Monotone deque, O(n) per row."""
    rows, n = a.shape
    m = n - w + 1
    out = np.empty((rows, m))
    dq = np.empty(n, np.int64)
    for r in range(rows):
        head = 0
        tail = 0
        for i in range(n):
            v = a[r, i]
            while tail > head and a[r, dq[tail - 1]] <= v:
                tail -= 1
            dq[tail] = i
            tail += 1
            if dq[head] <= i - w:
                head += 1
            if i >= w - 1:
                out[r, i - w + 1] = a[r, dq[head]]
    return out


@njit(cache=True)
def chain_power_rows(vals, s):
    """Per row: max over increasing index chains of the left-to-right sum of |a_i - a_j|**s.

    best(j) = max(0, max_{i<j} best(i) + |a_i - a_j|**s); a one-element chain scores 0.
    """
    rows, n = vals.shape
    out = np.zeros(rows)
    best = np.empty(n)
    for r in range(rows):
        top = 0.0
        for j in range(n):
            b = 0.0
            aj = vals[r, j]
            for i in range(j):
                c = best[i] + abs(vals[r, i] - aj) ** s
                if c > b:
                    b = c
            best[j] = b
            if b > top:
                top = b
        out[r] = top
    return out


@njit(cache=True)
def turning_points(a):
    """Indices of a sequence that start or end a maximal monotone run (endpoints included)."""
    n = a.shape[0]
    keep = np.empty(n, np.int64)
    m = 0
    keep[m] = 0
    m += 1
    direction = 0
    for i in range(1, n):
        d = a[i] - a[i - 1]
        if d == 0.0:
            continue
        cur = 1 if d > 0 else -1
        if direction != 0 and cur != direction:
            keep[m] = i - 1
            m += 1
        direction = cur
    if n > 1:
        keep[m] = n - 1
        m += 1
    return keep[:m]


@njit(cache=True)
def chain_power_rows_pruned(vals, s):
    """Same value as chain_power_rows in exact arithmetic, run on turning points only.

    For s >= 1 a chain point inside a monotone run can be slid to one end of the
    run without decreasing the sum (convexity of |.|**s), so restricting to run
    endpoints loses nothing; floating results may differ in the last bits.
    """
    rows, n = vals.shape
    out = np.zeros(rows)
    best = np.empty(n)
    seq = np.empty(n)
    for r in range(rows):
        idx = turning_points(vals[r])
        m = idx.shape[0]
        for q in range(m):
            seq[q] = vals[r, idx[q]]
        top = 0.0
        for j in range(m):
            b = 0.0
            aj = seq[j]
            for i in range(j):
                c = best[i] + abs(seq[i] - aj) ** s
                if c > b:
                    b = c
            best[j] = b
            if b > top:
                top = b
        out[r] = top
    return out


@njit(cache=True)
def jump_rows(vals, lam):
    """Per row: longest chain i_1 < ... < i_N with consecutive |differences| > lam."""
    rows, n = vals.shape
    out = np.ones(rows, np.int64)
    length = np.empty(n, np.int64)
    for r in range(rows):
        top = 1
        for j in range(n):
            b = 1
            aj = vals[r, j]
            for i in range(j):
                if abs(vals[r, i] - aj) > lam and length[i] + 1 > b:
                    b = length[i] + 1
            length[j] = b
            if b > top:
                top = b
        out[r] = top
    return out


@njit(cache=True)
def dd_row_sums(a):
    """Row sums of a 2-D array accumulated in double-double, rounded once."""
    rows, n = a.shape
    out = np.empty(rows)
    for r in range(rows):
        h = 0.0
        l = 0.0
        for j in range(n):
            h, l = _dd_add(h, l, a[r, j], 0.0)
        out[r] = h + l
    return out


@njit(cache=True)
def interval_max_1d(th, tl, origin, sides, out_lo, m, wlo, whi):
    """1-D uncentered maximal average over all listed lengths, fused into one pass per length.

    For x in [out_lo, out_lo + m): max over s in sides and anchors y in [x - s + 1, x]
    with wlo <= y and y + s <= whi of (dd sum of the table over [y, y + s)) / s.
    """
    n = th.shape[0] - 1
    out = np.zeros(m)
    avg = np.empty(m + sides.max())
    dq = np.empty(m + sides.max(), np.int64)
    for k in range(sides.shape[0]):
        s = sides[k]
        na = m + s - 1
        for i in range(na):
            y = out_lo - s + 1 + i
            if y < wlo or y + s > whi:
                avg[i] = -np.inf
                continue
            a = min(max(y - origin, 0), n)
            b = max(min(max(y + s - origin, 0), n), a)
            h, l = _dd_add(th[b], tl[b], -th[a], -tl[a])
            avg[i] = (h + l) / s
        head = 0
        tail = 0
        for i in range(na):
            v = avg[i]
            while tail > head and avg[dq[tail - 1]] <= v:
                tail -= 1
            dq[tail] = i
            tail += 1
            if dq[head] <= i - s:
                head += 1
            if i >= s - 1:
                v = avg[dq[head]]
                if v > out[i - s + 1]:
                    out[i - s + 1] = v
    return out
