"""Empirical excess mass on the circle and the multimodality statistic.

For a level ``lam >= 0`` the excess mass with ``k`` arcs is

    E_k(lam) = max over families of <= k disjoint closed arcs of
               sum_m [P_n(C_m) - lam * |C_m|]

and the statistic is ``Delta = max_lam E_{k+1}(lam) - E_k(lam)``.  Optimal
arcs start and end at sample points, so both quantities are exact finite
computations: a dynamic program over the sorted distinct locations gives
``E_k`` at one level, and a parametric search over the breakpoints of the
piecewise-linear envelope gives the maximum over levels.  See
:mod:`circmode._emkernels` for the compiled pieces.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._emkernels import (delta_from_sorted, distinct_locations, envelope,
                         excess_mass_lines)
from ._validation import TWO_PI
from .circular import CircularSample
from .exceptions import InvalidK, TooLarge

BRUTE_FORCE_MAX_N = 14


@dataclass(frozen=True)
class Arc:
    """Closed arc from ``start`` counterclockwise to ``end``."""

    start: float
    end: float
    mass: float
    length: float


@dataclass(frozen=True)
class ArcFamily:
    """Pairwise disjoint closed arcs with endpoints at sample points."""

    arcs: tuple

    @property
    def mass(self):
        return float(sum(a.mass for a in self.arcs))

    @property
    def length(self):
        return float(sum(a.length for a in self.arcs))

    def value(self, lam):
        return self.mass - lam * self.length

    def __len__(self):
        return len(self.arcs)


@dataclass(frozen=True)
class ExcessMassResult:
    """Statistic, maximizing level and the two optimal families there."""

    delta: float
    lambda_star: float
    family_k: ArcFamily
    family_k1: ArcFamily
    k: int


def _as_sample(sample):
    return sample if isinstance(sample, CircularSample) else CircularSample(sample)


def _check_k(sample, k, extra=0):
    if int(k) != k or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    if k + extra > sample.n:
        raise InvalidK(f"k={k} needs at least {k + extra} points, sample has {sample.n}")
    return int(k)


def _structure(sample):
    locs, counts, gaps = distinct_locations(np.ascontiguousarray(sample.sorted))
    return locs, counts, gaps


# ---------------------------------------------------------------------------
# dynamic program with traceback (used once per call, so plain Python)


def _better(a, b, invn, lam):
    if a is None:
        return False
    if b is None:
        return True
    va = a[0] * invn - lam * a[1]
    vb = b[0] * invn - lam * b[1]
    return va > vb or (va == vb and a[1] < b[1])


def _sweep_trace(counts, gaps, lam, K, invn, wrap):
    """Python twin of the compiled sweep that also records how states arose.

    States are ``(count, length, link)``; ``link`` chains back through the
    decisions so the arcs can be recovered.
    """
    m = len(counts)
    cin = [None] * (K + 1)
    cout = [None] * (K + 1)
    if wrap:
        cin[0] = (counts[0], gaps[m - 1], ("wrapinit", 0, None))
    else:
        cout[0] = (0.0, 0.0, None)
        if K >= 1:
            cin[1] = (counts[0], 0.0, ("start", 0, None))
    for i in range(1, m):
        g, w = gaps[i - 1], counts[i]
        nin = [None] * (K + 1)
        for j in range(K + 1):
            best = None
            if cin[j] is not None:
                best = (cin[j][0], cin[j][1] + g, ("extend", i, cin[j][2]))
            if j >= 1:
                for src in (cout[j - 1], cin[j - 1]):
                    if _better(src, best, invn, lam):
                        best = (src[0], src[1], ("start", i, src[2]))
            if best is not None:
                nin[j] = (best[0] + w, best[1], best[2])
        for j in range(K + 1):
            if _better(cin[j], cout[j], invn, lam):
                cout[j] = cin[j]
            cin[j] = nin[j]
    res = [None] * (K + 1)
    for j in range(K + 1):
        if wrap:
            cand, jj = cin[j], max(j, 1)
        else:
            cand, jj = cout[j], j
            if _better(cin[j], cand, invn, lam):
                cand = cin[j]
        if jj <= K and cand is not None:
            res[jj] = (cand, wrap)
    return res


def _family_from_link(link, wrap, locs, counts, gaps, n):
    m = len(locs)
    covered, starts = set(), set()
    node = link
    while node is not None:
        kind, i, prev = node
        covered.add(i)
        if kind == "start":
            starts.add(i)
        node = prev
    if wrap:
        # the final open arc runs through the last location into the first
        covered.add(m - 1)
    arcs = []
    if not starts and covered:
        # single arc around the whole circle
        return ArcFamily((Arc(float(locs[0]), float(locs[-1]), float(counts.sum() / n), TWO_PI),))
    for s in sorted(starts):
        t, mass, length = s, counts[s], 0.0
        while True:
            nxt = (t + 1) % m
            if nxt == s or nxt in starts or nxt not in covered:
                break
            length += gaps[t]
            mass += counts[nxt]
            t = nxt
        arcs.append(Arc(float(locs[s]), float(locs[t]), float(mass / n), float(length)))
    return ArcFamily(tuple(arcs))


def _trace(locs, counts, gaps, lam, K, n):
    invn = 1.0 / n
    counts_l = [float(c) for c in counts]
    gaps_l = [float(g) for g in gaps]
    best = [((0.0, 0.0, None), False)] + [None] * K
    sweeps = [_sweep_trace(counts_l, gaps_l, lam, K, invn, False)]
    if len(locs) > 1:
        sweeps.append(_sweep_trace(counts_l, gaps_l, lam, K, invn, True))
    for res in sweeps:
        for j in range(1, K + 1):
            if res[j] is not None and (best[j] is None
                                       or _better(res[j][0], best[j][0], invn, lam)):
                best[j] = res[j]
    for j in range(1, K + 1):
        if best[j] is None or _better(best[j - 1][0], best[j][0], invn, lam):
            best[j] = best[j - 1]
    return [_family_from_link(st[2], wrap, locs, counts, gaps, n) if st[2] is not None
            else ArcFamily(()) for st, wrap in best]


def excess_mass_at(sample, k, lam):
    """``E_{n,k}(lam)`` and an optimal family of at most ``k`` arcs.

    Ties in value are broken toward the shorter total length.
    """
    sample = _as_sample(sample)
    k = _check_k(sample, k)
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    locs, counts, gaps = _structure(sample)
    c, l = excess_mass_lines(counts, gaps, lam, k, sample.n)
    value = c[k] / sample.n - lam * l[k]
    family = _trace(locs, counts, gaps, lam, k, sample.n)[k]
    return float(value), family


def _level_cap(gaps):
    return 4.0 / float(np.min(gaps))


def lambda_candidates(sample, k):
    """Exact breakpoints of ``E_k`` and ``E_{k+1}`` as functions of the level, plus 0.

    ``D = E_{k+1} - E_k`` is linear between consecutive values, so its
    maximum over levels is attained on this set.  Beyond the last value
    both envelopes are flat (only zero-length arcs remain).
    """
    sample = _as_sample(sample)
    locs, counts, gaps = _structure(sample)
    out = [np.zeros(1)]
    if locs.size > 1:
        hi = _level_cap(gaps)
        for j in (k, k + 1):
            out.append(envelope(counts, gaps, j, sample.n, hi)[2])
    vals = np.unique(np.concatenate(out))
    keep = np.ones(vals.size, bool)
    keep[1:] = np.diff(vals) > 1e-12 * np.maximum(1.0, vals[1:])
    return vals[keep]


def excess_mass_difference(sample, k, lam):
    """``D_{n,k+1}(lam) = E_{n,k+1}(lam) - E_{n,k}(lam)`` (vectorized in ``lam``)."""
    sample = _as_sample(sample)
    locs, counts, gaps = _structure(sample)
    lam = np.atleast_1d(np.asarray(lam, float))
    out = np.empty(lam.size)
    for i, x in enumerate(lam):
        c, l = excess_mass_lines(counts, gaps, float(x), k + 1, sample.n)
        out[i] = (c[k + 1] - c[k]) / sample.n - x * (l[k + 1] - l[k])
    return out


def delta_statistic(sample, k):
    """Excess-mass statistic ``Delta_{n,k+1}`` with its maximizing level and families."""
    sample = _as_sample(sample)
    k = _check_k(sample, k, extra=1)
    delta, lam = delta_from_sorted(np.ascontiguousarray(sample.sorted), k)
    locs, counts, gaps = _structure(sample)
    fams = _trace(locs, counts, gaps, lam, k + 1, sample.n)
    return ExcessMassResult(float(delta), float(lam), fams[k], fams[k + 1], k)


def delta_values(samples, k):
    """Statistic for every row of a ``(B, n)`` array (fast path, value only)."""
    from ._emkernels import delta_many

    return delta_many(np.ascontiguousarray(np.mod(samples, TWO_PI)), int(k))


# ---------------------------------------------------------------------------
# exhaustive oracle


def _all_arcs(counts, gaps):
    """Every arc with endpoints at locations, as bit masks (full circle excluded)."""
    m = counts.size
    masks, cnt, length, ends = [], [], [], []
    for s in range(m):
        mask, c, ln = 0, 0.0, 0.0
        for L in range(m):
            t = (s + L) % m
            if L:
                ln += gaps[(t - 1) % m]
            mask |= 1 << t
            c += counts[t]
            masks.append(mask)
            cnt.append(c)
            length.append(ln)
            ends.append((s, t))
    return (np.array(masks, np.int64), np.array(cnt), np.array(length), ends)


def _families(masks, cnt, length, jmax):
    """Minimal total length for each (number of arcs <= j, total count).

    Families with identical covered sets are interchangeable, so only the
    shortest one per mask is kept between rounds.
    """
    fam_mask = np.zeros(1, np.int64)
    fam_cnt = np.zeros(1)
    fam_len = np.zeros(1)
    fam_arcs = [()]
    levels = [(fam_cnt.copy(), fam_len.copy(), list(fam_arcs))]
    for _ in range(jmax):
        disjoint = (fam_mask[:, None] & masks[None, :]) == 0
        fi, ai = np.nonzero(disjoint)
        new_mask = fam_mask[fi] | masks[ai]
        new_cnt = fam_cnt[fi] + cnt[ai]
        new_len = fam_len[fi] + length[ai]
        all_mask = np.concatenate([fam_mask, new_mask])
        all_cnt = np.concatenate([fam_cnt, new_cnt])
        all_len = np.concatenate([fam_len, new_len])
        all_arcs = fam_arcs + [fam_arcs[f] + (a,) for f, a in zip(fi, ai)]
        order = np.lexsort((all_len, all_mask))
        first = np.ones(order.size, bool)
        first[1:] = all_mask[order][1:] != all_mask[order][:-1]
        keep = order[first]
        fam_mask, fam_cnt, fam_len = all_mask[keep], all_cnt[keep], all_len[keep]
        fam_arcs = [all_arcs[i] for i in keep]
        levels.append((fam_cnt.copy(), fam_len.copy(), list(fam_arcs)))
    return levels


def _lines(level):
    cnt, ln, arcs = level
    best = {}
    for c, l, a in zip(cnt, ln, arcs):
        if c not in best or l < best[c][0]:
            best[c] = (l, a)
    cs = np.array(sorted(best))
    return cs, np.array([best[c][0] for c in cs]), [best[c][1] for c in cs]


def brute_force_delta(sample, k):
    """Exhaustive ``Delta_{n,k+1}``: every family of at most ``k+1`` arcs, every level.

    For each number of arcs and each total count only the shortest family
    matters, which turns each excess mass into a maximum over finitely many
    lines; the difference is then evaluated at every pairwise line
    intersection, at 0 and beyond the last intersection.

    Raises
    ------
    TooLarge
        If the sample has more than 14 points.
    """
    sample = _as_sample(sample)
    if sample.n > BRUTE_FORCE_MAX_N:
        raise TooLarge(f"exhaustive enumeration limited to n <= {BRUTE_FORCE_MAX_N}")
    k = _check_k(sample, k, extra=1)
    n = sample.n
    locs, counts, gaps = _structure(sample)
    masks, cnt, length, ends = _all_arcs(counts, gaps)
    levels = _families(masks, cnt, length, k + 1)
    lines = {j: _lines(levels[j]) for j in (k, k + 1)}
    cands = [0.0]
    for cs, ls, _ in lines.values():
        for a, b in combinations(range(cs.size), 2):
            if ls[a] != ls[b]:
                lam = (cs[a] - cs[b]) / n / (ls[a] - ls[b])
                if lam > 0:
                    cands.append(lam)
    cands.append(2.0 * max(cands) + 1.0)
    cands = np.array(sorted(set(cands)))

    def top(j, lam):
        cs, ls, arcs = lines[j]
        vals = cs / n - lam * ls
        best = np.flatnonzero(vals == vals.max())
        i = best[np.argmin(ls[best])]
        return vals[i], arcs[i]

    best_d, best_lam = -np.inf, 0.0
    for lam in cands:
        d = top(k + 1, lam)[0] - top(k, lam)[0]
        if d > best_d:
            best_d, best_lam = d, lam

    def family(idx):
        arcs = []
        for a in idx:
            s, t = ends[a]
            arcs.append(Arc(float(locs[s]), float(locs[t]), float(cnt[a] / n), float(length[a])))
        return ArcFamily(tuple(sorted(arcs, key=lambda x: x.start)))

    return ExcessMassResult(float(best_d), float(best_lam), family(top(k, best_lam)[1]),
                            family(top(k + 1, best_lam)[1]), k)
