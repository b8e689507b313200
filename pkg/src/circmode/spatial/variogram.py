"""Robust empirical semivariogram and a weighted least-squares exponential fit."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import squareform

from ..exceptions import FitFailure

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
N_BINS = 15
MIN_CELLS = 30
VARIANCE_FLOOR = 1e-12


def haversine_km(a, b):
    """Great-circle distance between ``(lat, lon)`` points in degrees."""
    lat1, lon1 = np.radians(np.asarray(a, float)).T
    lat2, lon2 = np.radians(np.asarray(b, float)).T
    h = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise_km(centroids):
    """Condensed pairwise haversine distances (``scipy.spatial.distance`` order)."""
    c = np.asarray(centroids, float).reshape(-1, 2)
    i, j = np.triu_indices(len(c), 1)
    return haversine_km(c[i], c[j])


def distance_matrix_km(centroids):
    """Square matrix of pairwise haversine distances."""
    n = len(centroids)
    return squareform(pairwise_km(centroids)) if n > 1 else np.zeros((n, n))


@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram ``nugget + sill (1 - exp(-h / range))``.

    ``range`` is in km.  ``fallback`` records that the fit was replaced by
    ``nugget = 0, sill = variance, range = median distance``.
    """

    sill: float
    range: float
    nugget: float = 0.0
    kind: str = "exponential"
    fallback: bool = False

    def __post_init__(self):
        if self.sill <= 0 or self.range <= 0 or self.nugget < 0:
            raise ValueError("need sill > 0, range > 0, nugget >= 0")

    @property
    def variance(self):
        """Total variance ``nugget + sill``."""
        return self.nugget + self.sill

    def __call__(self, h):
        h = np.asarray(h, float)
        return self.nugget + self.sill * (1.0 - np.exp(-h / self.range))

    def correlation(self, h, variance=None):
        """``1 - gamma(h) / variance`` clamped to [0, 1], and the clamp count."""
        var = self.variance if variance is None else variance
        rho = 1.0 - self(h) / var
        clamped = int(np.count_nonzero((rho < 0) | (rho > 1)))
        return np.clip(rho, 0.0, 1.0), clamped


def empirical_variogram(centroids, values, n_bins=N_BINS):
    """Robust binned semivariogram.

    Returns ``(h, gamma, counts)`` over nonempty bins; bins split
    ``(0, max distance / 2]`` evenly and ``h`` is each bin's mean distance.
    """
    values = np.asarray(values, float)
    d = pairwise_km(centroids)
    i, j = np.triu_indices(len(values), 1)
    root = np.sqrt(np.abs(values[i] - values[j]))
    hmax = d.max() / 2 if d.size else 0.0
    if hmax <= 0:
        return np.empty(0), np.empty(0), np.empty(0, int)
    edges = np.linspace(0.0, hmax, n_bins + 1)
    inside = (d > 0) & (d <= hmax)
    idx = np.clip(np.searchsorted(edges, d[inside], side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sum_root = np.bincount(idx, weights=root[inside], minlength=n_bins)
    sum_d = np.bincount(idx, weights=d[inside], minlength=n_bins)
    ok = counts > 0
    n = counts[ok]
    gamma = (sum_root[ok] / n) ** 4 / (2.0 * (0.457 + 0.494 / n))
    return sum_d[ok] / n, gamma, n


def _fallback(centroids, values):
    d = pairwise_km(centroids)
    var = max(float(np.var(values, ddof=1)) if len(values) > 1 else 0.0, VARIANCE_FLOOR)
    rng = float(np.median(d[d > 0])) if np.any(d > 0) else 1.0
    return VariogramModel(sill=var, range=rng, nugget=0.0, fallback=True)


def _wls(h, gamma, counts, var):
    def resid(params):
        nugget, sill, rng = params
        model = nugget + sill * (1.0 - np.exp(-h / rng))
        return np.sqrt(counts) * (gamma / model - 1.0)

    x0 = [0.1 * var, var, max(h.max() / 3, 1e-6)]
    res = least_squares(resid, x0, bounds=([0.0, 1e-12 * var, 1e-9], [np.inf] * 3),
                        x_scale=[var, var, x0[2]])
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitFailure(f"variogram fit did not converge: {res.message}")
    nugget, sill, rng = res.x
    if rng > 1e3 * h.max():
        raise FitFailure("variogram range diverged")
    return VariogramModel(sill=float(sill), range=float(rng), nugget=float(nugget))


def fit_variogram(centroids, values, n_bins=N_BINS, min_cells=MIN_CELLS, strict=False):
    """Exponential semivariogram fitted to the robust empirical estimate.

    Weighted least squares with weights ``N(h) / gamma(h)^2`` on the model
    values.  With fewer than ``min_cells`` cells, a flat field or a failed
    fit, the fallback model is returned (or :class:`FitFailure` is raised
    when ``strict``).
    """
    values = np.asarray(values, float)
    try:
        if len(values) < min_cells:
            raise FitFailure(f"need at least {min_cells} cells, got {len(values)}")
        h, gamma, counts = empirical_variogram(centroids, values, n_bins)
        var = float(np.var(values, ddof=1))
        if h.size < 3 or var <= VARIANCE_FLOOR or np.all(gamma <= 0):
            raise FitFailure("not enough variability for a variogram fit")
        return _wls(h, gamma, counts, var)
    except FitFailure as exc:
        if strict:
            raise
        log.warning("variogram fallback: %s", exc)
        return _fallback(centroids, values)
