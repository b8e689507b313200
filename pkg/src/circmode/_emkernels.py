"""Compiled kernels for the circular excess mass.

Everything here works on the *distinct* sorted locations of a sample,
with integer multiplicities, so duplicated angles behave as one location
carrying extra mass.  Lines of the excess-mass envelope are stored as
``(count, length)`` pairs; the value of a line at level ``lam`` is
``count / n - lam * length``.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def distinct_locations(x_sorted):
    """Collapse a sorted sample into locations, multiplicities and gaps.

    ``gaps[i]`` is the counterclockwise distance from location ``i`` to
    location ``i + 1``; the last entry closes the circle.
    """
    n = x_sorted.shape[0]
    locs = np.empty(n)
    counts = np.zeros(n)
    m = 0
    for i in range(n):
        if m > 0 and x_sorted[i] == locs[m - 1]:
            counts[m - 1] += 1.0
        else:
            locs[m] = x_sorted[i]
            counts[m] = 1.0
            m += 1
    locs = locs[:m].copy()
    counts = counts[:m].copy()
    gaps = np.empty(m)
    for i in range(m - 1):
        gaps[i] = locs[i + 1] - locs[i]
    gaps[m - 1] = locs[0] + TWO_PI - locs[m - 1]
    return locs, counts, gaps


@njit(cache=True)
def _better(c1, l1, c2, l2, invn, lam):
    # lexicographic: larger value first, then shorter total length
    if c1 < 0.0:
        return False
    if c2 < 0.0:
        return True
    v1 = c1 * invn - lam * l1
    v2 = c2 * invn - lam * l2
    if v1 > v2:
        return True
    if v1 == v2 and l1 < l2:
        return True
    return False


@njit(cache=True)
def _sweep(counts, gaps, lam, kmax, invn, wrap, res_c, res_l):
    """One linear pass of the arc DP.

    ``wrap=False``: the closing gap is left uncovered.
    ``wrap=True``: the closing gap is covered, so the arc open at the last
    location is the same arc that is open at the first one.
    Results are merged into ``res_c``/``res_l`` (indexed by arc count).
    """
    m = counts.shape[0]
    in_c = np.full(kmax + 1, -1.0)
    in_l = np.zeros(kmax + 1)
    out_c = np.full(kmax + 1, -1.0)
    out_l = np.zeros(kmax + 1)
    nin_c = np.empty(kmax + 1)
    nin_l = np.empty(kmax + 1)
    if wrap:
        # initial segment of the wrapping arc, not counted yet
        in_c[0] = counts[0]
        in_l[0] = gaps[m - 1]
    else:
        out_c[0] = 0.0
        if kmax >= 1:
            in_c[1] = counts[0]
            in_l[1] = 0.0
    for i in range(1, m):
        g = gaps[i - 1]
        w = counts[i]
        for j in range(kmax + 1):
            bc = -1.0
            bl = 0.0
            if in_c[j] >= 0.0:
                bc = in_c[j]
                bl = in_l[j] + g
            if j >= 1:
                if _better(out_c[j - 1], out_l[j - 1], bc, bl, invn, lam):
                    bc = out_c[j - 1]
                    bl = out_l[j - 1]
                if _better(in_c[j - 1], in_l[j - 1], bc, bl, invn, lam):
                    bc = in_c[j - 1]
                    bl = in_l[j - 1]
            if bc >= 0.0:
                nin_c[j] = bc + w
                nin_l[j] = bl
            else:
                nin_c[j] = -1.0
                nin_l[j] = 0.0
        for j in range(kmax + 1):
            if _better(in_c[j], in_l[j], out_c[j], out_l[j], invn, lam):
                out_c[j] = in_c[j]
                out_l[j] = in_l[j]
            in_c[j] = nin_c[j]
            in_l[j] = nin_l[j]
    for j in range(kmax + 1):
        if wrap:
            c = in_c[j]
            ln = in_l[j]
            jj = j if j >= 1 else 1
        else:
            c = out_c[j]
            ln = out_l[j]
            if _better(in_c[j], in_l[j], c, ln, invn, lam):
                c = in_c[j]
                ln = in_l[j]
            jj = j
        if jj <= kmax and _better(c, ln, res_c[jj], res_l[jj], invn, lam):
            res_c[jj] = c
            res_l[jj] = ln


@njit(cache=True)
def excess_mass_lines(counts, gaps, lam, kmax, n):
    """Optimal ``(count, length)`` for at most ``j`` arcs, ``j = 0..kmax``."""
    invn = 1.0 / n
    res_c = np.full(kmax + 1, -1.0)
    res_l = np.zeros(kmax + 1)
    res_c[0] = 0.0
    _sweep(counts, gaps, lam, kmax, invn, False, res_c, res_l)
    if counts.shape[0] > 1:
        _sweep(counts, gaps, lam, kmax, invn, True, res_c, res_l)
    # "at most j arcs": carry the best smaller family forward
    for j in range(1, kmax + 1):
        if _better(res_c[j - 1], res_l[j - 1], res_c[j], res_l[j], invn, lam):
            res_c[j] = res_c[j - 1]
            res_l[j] = res_l[j - 1]
    return res_c, res_l


@njit(cache=True)
def envelope(counts, gaps, j, n, lam_hi):
    """Exact upper envelope of ``lam -> E_{n,j}(lam)`` on ``[0, lam_hi]``.

    Parametric search: between two supporting lines, evaluate the DP at
    their intersection; either the intersection is a breakpoint or the DP
    exposes a new supporting line strictly between the two.
    Returns the supporting lines ``(counts, lengths)`` and the breakpoints.
    """
    invn = 1.0 / n
    c0, l0 = excess_mass_lines(counts, gaps, 0.0, j, n)
    c1, l1 = excess_mass_lines(counts, gaps, lam_hi, j, n)
    line_c = [c0[j], c1[j]]
    line_l = [l0[j], l1[j]]
    breaks = [0.0]
    stack_a = [0]
    stack_b = [1]
    while len(stack_a) > 0:
        a = stack_a.pop()
        b = stack_b.pop()
        ma = line_c[a] * invn
        la = line_l[a]
        mb = line_c[b] * invn
        lb = line_l[b]
        scale = 1e-12 * (la if la > 1.0 else 1.0)
        if la - lb <= 1e-13:
            continue
        lam = (ma - mb) / (la - lb)
        cc, ll = excess_mass_lines(counts, gaps, lam, j, n)
        vc = cc[j] * invn - lam * ll[j]
        va = ma - lam * la
        if vc > va + scale * (1.0 + lam) and ll[j] < la - 1e-13 and ll[j] > lb + 1e-13:
            line_c.append(cc[j])
            line_l.append(ll[j])
            idx = len(line_c) - 1
            stack_a.append(a)
            stack_b.append(idx)
            stack_a.append(idx)
            stack_b.append(b)
        else:
            breaks.append(lam)
    return np.array(line_c), np.array(line_l), np.array(breaks)


@njit(cache=True)
def _envelope_value(line_c, line_l, invn, lam):
    best = -np.inf
    for i in range(line_c.shape[0]):
        v = line_c[i] * invn - lam * line_l[i]
        if v > best:
            best = v
    return best


@njit(cache=True)
def delta_from_sorted(x_sorted, k):
    """``(Delta_{n,k+1}, argmax lambda)`` for a sorted sample in [0, 2pi).

    ``D = E_{k+1} - E_k`` is convex wherever ``E_k`` is linear, so its
    maximum sits at a breakpoint of ``E_k``.  Only the envelope of
    ``E_k`` is resolved, and intervals whose bound (chord of ``E_{k+1}``
    minus the tangent of ``E_k``) cannot beat the incumbent are skipped.
    """
    n = x_sorted.shape[0]
    locs, counts, gaps = distinct_locations(x_sorted)
    m = locs.shape[0]
    if m == 1:
        return 0.0, 0.0
    invn = 1.0 / n
    lam_hi = 4.0 / np.min(gaps)
    k1 = k + 1
    lams = [0.0, lam_hi]
    kc = [0.0, 0.0]
    kl = [0.0, 0.0]
    ev = [0.0, 0.0]
    e1v = [0.0, 0.0]
    best = 0.0
    best_lam = 0.0
    for t in range(2):
        c, l = excess_mass_lines(counts, gaps, lams[t], k1, n)
        kc[t] = c[k]
        kl[t] = l[k]
        ev[t] = c[k] * invn - lams[t] * l[k]
        e1v[t] = c[k1] * invn - lams[t] * l[k1]
        d = e1v[t] - ev[t]
        if d > best:
            best = d
            best_lam = lams[t]
    stack_a = [0]
    stack_b = [1]
    while len(stack_a) > 0:
        a = stack_a.pop()
        b = stack_b.pop()
        la = kl[a]
        lb = kl[b]
        if la - lb <= 1e-13:
            continue
        ma = kc[a] * invn
        mb = kc[b] * invn
        lam = (ma - mb) / (la - lb)
        tangent = ma - lam * la
        frac = (lam - lams[a]) / (lams[b] - lams[a])
        chord = e1v[a] + frac * (e1v[b] - e1v[a])
        if chord - tangent <= best:
            continue
        c, l = excess_mass_lines(counts, gaps, lam, k1, n)
        vk = c[k] * invn - lam * l[k]
        v1 = c[k1] * invn - lam * l[k1]
        d = v1 - vk
        if d > best:
            best = d
            best_lam = lam
        tol = 1e-12 * (1.0 + lam * la)
        if vk > tangent + tol and l[k] < la - 1e-13 and l[k] > lb + 1e-13:
            lams.append(lam)
            kc.append(c[k])
            kl.append(l[k])
            ev.append(vk)
            e1v.append(v1)
            idx = len(lams) - 1
            stack_a.append(a)
            stack_b.append(idx)
            stack_a.append(idx)
            stack_b.append(b)
    return best, best_lam


@njit(cache=True)
def delta_many(samples, k):
    """Row-wise statistic for a ``(B, n)`` array of resamples (unsorted)."""
    out = np.empty(samples.shape[0])
    for b in range(samples.shape[0]):
        out[b] = delta_from_sorted(np.sort(samples[b]), k)[0]
    return out
