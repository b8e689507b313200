"""Hierarchical false-discovery-rate testing over patches of grid cells.

Patches are tested first, with a size-weighted step-up rule on patch
p-values built from averaged z-scores.  Inside each rejected patch, cells
are then tested with p-values conditional on the patch having been
selected, using a two-stage step-up rule.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from ..exceptions import QuadratureFailure
from .variogram import distance_matrix_km, fit_variogram

log = logging.getLogger(__name__)

QUAD_EPSABS = 1e-9
QUAD_SPAN = 12.0
RHO_ONE = 1.0 - 1e-12


def zscore_from_pvalue(p, B, rng):
    """``Phi^-1(1 - p)``, with bootstrap p-values of 0 or 1 made finite.

    A p-value of exactly 0 is replaced by a draw from Beta(1/2, B + 1/2),
    one of exactly 1 by a draw from Beta(B + 1/2, 1/2).
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p-value out of range: {p}")
    if p == 0.0:
        p = rng.beta(0.5, B + 0.5)
    elif p == 1.0:
        p = rng.beta(B + 0.5, 0.5)
    # guard the extreme tails of the Beta draws
    p = min(max(p, np.finfo(float).tiny), 1.0 - np.finfo(float).epsneg)
    return float(stats.norm.isf(p))


@dataclass(frozen=True)
class PatchStatistic:
    """Patch-level summary used by both testing stages."""

    mean_z: float
    se_mean: float
    pvalue: float
    correlations: np.ndarray = field(repr=False)
    sd: float = 1.0
    clamped: int = 0


def patch_pvalue(zscores, centroids, variogram, variance=None):
    """Upper-tail p-value of the standardized mean z-score of one patch.

    Parameters
    ----------
    zscores : array-like, shape (L,)
    centroids : array-like, shape (L, 2)
        Cell centres as ``(lat, lon)`` degrees.
    variogram : VariogramModel
    variance : float, optional
        Cell variance; the variogram's ``nugget + sill`` by default.

    Returns
    -------
    PatchStatistic
    """
    z = np.asarray(zscores, float)
    L = z.size
    if L == 0:
        raise ValueError("empty patch")
    var = variogram.variance if variance is None else float(variance)
    sd = np.sqrt(var)
    if L > 1:
        rho, clamped = variogram.correlation(distance_matrix_km(centroids), var)
        np.fill_diagonal(rho, 1.0)
    else:
        rho, clamped = np.ones((1, 1)), 0
    off = (rho.sum() - L) / 2.0
    se = sd / L * np.sqrt(L + 2.0 * off)
    mean = float(z.mean())
    return PatchStatistic(mean, float(se), float(stats.norm.sf(mean / se)), rho, float(sd),
                          clamped)


def _step_up(sorted_p, thresholds):
    ok = np.flatnonzero(sorted_p <= thresholds)
    return int(ok[-1]) + 1 if ok.size else 0


def bh(pvalues, alpha, m=None):
    """Classical step-up rule; indices of the rejected p-values.

    ``m`` replaces the number of tests in the thresholds ``i alpha / m``.
    """
    p = np.asarray(pvalues, float)
    order = np.argsort(p, kind="stable")
    m = p.size if m is None else m
    k = _step_up(p[order], np.arange(1, p.size + 1) * alpha / m)
    return np.sort(order[:k])


def weighted_bh(pvalues, sizes, alpha):
    """Size-weighted step-up rule.

    The ``i``-th smallest p-value is compared with ``alpha`` times the
    share of cells in the ``i`` patches with the smallest p-values.

    Returns
    -------
    rejected : ndarray of int
        Indices of rejected patches.
    k : int
        Number rejected.
    cutoff : float
        Threshold at the largest rejected p-value (0 when none).
    """
    p = np.asarray(pvalues, float)
    w = np.asarray(sizes, float)
    if p.shape != w.shape:
        raise ValueError("pvalues and sizes must align")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    order = np.argsort(p, kind="stable")
    thresholds = np.cumsum(w[order]) / w.sum() * alpha
    k = _step_up(p[order], thresholds)
    cutoff = float(thresholds[k - 1]) if k else 0.0
    return np.sort(order[:k]), k, cutoff


def _integrand(u, c, rho, s, null_share, mu):
    a = (c - rho * u) / s
    return (null_share * stats.norm.sf(a)
            + (1.0 - null_share) * stats.norm.sf(a - mu / s)) * stats.norm.pdf(u)


def conditional_pvalue(z, cutoff, null_share, mu, rho):
    """p-value of one cell given that its patch passed the patch stage.

    Parameters
    ----------
    z : float
        Cell z-score.
    cutoff : float
        Patch-stage threshold ``u1`` in (0, 1).
    null_share : float
        Estimated fraction of null patches, in [0, 1].
    mu : float
        Standardized patch-mean shift under the alternative.
    rho : float
        Correlation between the cell z-score and the standardized patch mean.
    """
    if not 0.0 < cutoff < 1.0:
        raise ValueError("cutoff must lie in (0, 1)")
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    c = stats.norm.isf(cutoff)
    denom = null_share * cutoff + (1.0 - null_share) * stats.norm.sf(c - mu)
    if rho >= RHO_ONE:
        # the cell and the patch mean coincide: indicator limits
        num = (null_share * stats.norm.sf(max(z, c))
               + (1.0 - null_share) * stats.norm.sf(max(z, c - mu)))
        return float(np.clip(num / denom, 0.0, 1.0))
    s = np.sqrt(1.0 - rho * rho)
    lo = max(float(z), -QUAD_SPAN)
    hi = max(float(z), 0.0) + QUAD_SPAN
    if lo >= hi:
        return 0.0
    num, err, info = integrate.quad(_integrand, lo, hi, args=(c, rho, s, null_share, mu),
                                    epsabs=QUAD_EPSABS, limit=200, full_output=1)[:3]
    if err > 10 * QUAD_EPSABS and err > 1e-6 * abs(num):
        raise QuadratureFailure(f"quadrature error {err:.2e} at z={z}")
    return float(np.clip(num / denom, 0.0, 1.0))


def two_stage_bh(pvalues, alpha):
    """Two-stage adaptive step-up rule at level ``alpha``.

    Stage one runs the classical rule at ``alpha / (1 + alpha)`` to estimate
    the number of nulls; stage two reruns it with that estimate in place of
    the number of tests.  Returns indices of the rejected p-values.
    """
    p = np.asarray(pvalues, float)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    L = p.size
    level = alpha / (1.0 + alpha)
    k1 = bh(p, level).size
    if k1 == 0:
        return np.empty(0, int)
    if k1 == L:
        return np.arange(L)
    return bh(p, level, m=L - k1)


@dataclass
class FdrOutcome:
    """Decisions of the hierarchical procedure.

    Cell keys are the ids used in the input mapping.
    """

    alpha_c: float
    alpha_r: float
    rejected_patches: tuple
    k: int
    cutoff: float
    patch_pvalues: dict
    zscores: dict
    conditional_pvalues: dict
    rejected_cells: frozenset
    variogram: object = None
    null_share: float = 1.0
    clamped: int = 0


def hierarchical_test(cells, patches, alpha_c=0.05, alpha_r=0.05, B=200, rng=None,
                      variogram=None, patch_variance=False):
    """Patch-then-cell testing of per-cell p-values.

    Parameters
    ----------
    cells : mapping
        Cell id to :class:`Cell` (with ``pvalue`` and ``centroid``).
    patches : sequence of Patch
        Patches whose ``cells`` are ids in ``cells``.
    alpha_c, alpha_r : float
        Levels of the patch stage and of the within-patch stage.
    B : int
        Bootstrap size behind the p-values (for the 0/1 replacement).
    rng : Generator
        Source of the 0/1 replacements, consumed in sorted cell-id order.
    variogram : VariogramModel, optional
        Fitted from the z-scores when omitted.
    patch_variance : bool
        Use each patch's empirical z variance instead of the variogram's
        total variance (singletons keep the global value).

    Returns
    -------
    FdrOutcome
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for a, name in ((alpha_c, "alpha_c"), (alpha_r, "alpha_r")):
        if not 0.0 < a < 1.0:
            raise ValueError(f"{name} must lie in (0, 1)")
    in_patch = sorted({cid for p in patches for cid in p.cells})
    z = {cid: zscore_from_pvalue(cells[cid].pvalue, B, rng) for cid in in_patch}
    for cid, val in z.items():
        cells[cid].zscore = val
    if not patches:
        return FdrOutcome(alpha_c, alpha_r, (), 0, 0.0, {}, z, {}, frozenset())
    if variogram is None:
        variogram = fit_variogram([cells[c].centroid for c in in_patch],
                                  [z[c] for c in in_patch])
    stats_by_patch = {}
    clamped = 0
    for patch in patches:
        zz = np.array([z[c] for c in patch.cells])
        var = None
        if patch_variance and zz.size > 1:
            var = max(float(np.var(zz, ddof=1)), 1e-12)
        st = patch_pvalue(zz, [cells[c].centroid for c in patch.cells], variogram, var)
        stats_by_patch[patch.id] = st
        clamped += st.clamped
    pv = np.array([stats_by_patch[p.id].pvalue for p in patches])
    sizes = np.array([p.size for p in patches])
    idx, k, cutoff = weighted_bh(pv, sizes, alpha_c)
    patch_p = {p.id: float(stats_by_patch[p.id].pvalue) for p in patches}
    J = len(patches)
    null_share = min(1.0, (J - k) / (1.0 - alpha_c) / J)
    if k == 0:
        return FdrOutcome(alpha_c, alpha_r, (), 0, 0.0, patch_p, z, {}, frozenset(),
                          variogram, null_share, clamped)
    grand_mean = float(np.mean(list(z.values())))
    cond = {}
    rejected = set()
    for i in idx:
        patch = patches[i]
        st = stats_by_patch[patch.id]
        mu = grand_mean / st.se_mean
        L = patch.size
        rho_cell = (st.correlations.sum(axis=1)) * st.sd / (L * st.se_mean)
        pc = np.array([conditional_pvalue(z[c], cutoff, null_share, mu,
                                          float(np.clip(r, -1.0, 1.0)))
                       for c, r in zip(patch.cells, rho_cell)])
        cond.update(zip(patch.cells, pc.tolist()))
        rejected.update(patch.cells[j] for j in two_stage_bh(pc, alpha_r))
    return FdrOutcome(alpha_c, alpha_r, tuple(patches[i].id for i in idx), k, cutoff,
                      patch_p, z, cond, frozenset(rejected), variogram, null_share, clamped)
