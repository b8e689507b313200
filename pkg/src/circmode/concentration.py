"""Concentration selection for the wrapped-normal estimator.

Two choices are needed: the *critical* concentration, the largest value at
which the estimate has at most ``k`` modes, and a *plug-in* concentration
tuned for estimating the second derivative, whose unknown curvature
functional is taken from a fitted von Mises mixture.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ive

from ._validation import TWO_PI, check_concentration, check_k, seed_from
from .circular import (CircularSample, KdeModel, count_modes_on_grid,
                       default_grid_size, n_series_terms)
from ._vmkernels import COLLAPSED, OK, em_fit
from .exceptions import DegenerateDensity, FitFailure, ZeroDensity

NU_MIN = 1e-4
NU_MAX = 1.0 - 1e-4
_MAX_GRID = 1 << 17


def _as_sample(sample):
    return sample if isinstance(sample, CircularSample) else CircularSample(sample)


class _MomentCache:
    """Trigonometric moments of one sample, extended on demand."""

    def __init__(self, sample):
        self.sample = sample
        self.moments = np.empty(0, complex)

    def model(self, nu):
        P = n_series_terms(nu)
        have = self.moments.size
        if P > have:
            # grow geometrically so a bisection pays for few extensions
            upto = max(P, min(2 * have, n_series_terms(NU_MAX)))
            extra = self.sample.trig_moments(upto, start=have + 1)
            self.moments = np.concatenate([self.moments, extra])
        return KdeModel(self.sample, nu, moments=self.moments)


def _count_on_grid(model, size):
    try:
        return count_modes_on_grid(model, size)
    except DegenerateDensity:
        # flat to working precision: same convention as the uniform limit
        return 1


def _count(cache, nu):
    if nu <= NU_MIN:
        return 1
    model = cache.model(nu)
    size = default_grid_size(model.n_terms)
    last = _count_on_grid(model, size)
    while size < _MAX_GRID:
        size *= 2
        now = _count_on_grid(model, size)
        if now == last:
            return now
        last = now
    return last


def count_modes(sample, nu):
    """Number of modes of the estimate at concentration ``nu``.

    The grid starts at 1024 points (or 8 per series term) and is doubled
    until two successive counts agree.  Below ``nu = 1e-4``, or whenever
    the derivative stays below the truncation noise everywhere, the
    estimate is treated as flat and 1 is returned.
    """
    nu = check_concentration(nu)
    return _count(_MomentCache(_as_sample(sample)), nu)


@dataclass(frozen=True)
class CriticalConcentration:
    """Result of the critical-concentration search.

    ``attained`` is False when even the upper search bound gives at most
    ``k`` modes; ``nu_k`` is then that bound.
    """

    nu_k: float
    k: int
    bracket_width: float
    attained: bool = True


def critical_concentration(sample, k, tol=1e-5):
    """Largest concentration whose estimate has at most ``k`` modes.

    Bisection on [1e-4, 1 - 1e-4]; the mode count is nondecreasing in the
    concentration, so the final bracket ``[nu_k, nu_k + bracket_width]``
    straddles the transition.
    """
    k = check_k(k)
    if not tol > 0:
        raise ValueError("tol must be positive")
    cache = _MomentCache(_as_sample(sample))

    def count(nu):
        return _count(cache, nu)

    # the upper bound is only probed if every bisection step stayed below
    # the transition; by monotonicity this is equivalent to probing it first
    lo, hi = NU_MIN, NU_MAX
    seen_above = False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count(mid) <= k:
            lo = mid
        else:
            hi = mid
            seen_above = True
    if not seen_above and count(NU_MAX) <= k:
        return CriticalConcentration(nu_k=NU_MAX, k=k, bracket_width=0.0, attained=False)
    return CriticalConcentration(nu_k=lo, k=k, bracket_width=hi - lo)


# ---------------------------------------------------------------------------
# von Mises mixtures


def _log_vm_norm(kappa):
    # log(2 pi I0(kappa)) - kappa, stable for large kappa
    return np.log(TWO_PI * ive(0, kappa))


def mean_resultant_ratio(kappa):
    """``A(kappa) = I1(kappa) / I0(kappa)``."""
    kappa = np.asarray(kappa, float)
    return ive(1, kappa) / ive(0, kappa)


def inverse_resultant_ratio(rbar, kappa_max=1e5):
    """Solve ``A(kappa) = rbar`` elementwise (approximation plus Newton polish)."""
    r = np.clip(np.asarray(rbar, float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(r < 0.53, 2 * r + r**3 + 5 * r**5 / 6,
                         np.where(r < 0.85, -0.4 + 1.39 * r + 0.43 / (1 - r),
                                  1.0 / (r * (1.0 - r) * (3.0 - r))))
    kappa = np.where(np.isfinite(kappa) & (r < 1.0), kappa, kappa_max)
    kappa = np.clip(kappa, 1e-12, kappa_max)
    for _ in range(3):
        a = mean_resultant_ratio(kappa)
        da = 1.0 - a / kappa - a * a
        step = np.where(da > 0, (a - r) / np.where(da > 0, da, 1.0), 0.0)
        kappa = np.clip(kappa - step, 1e-12, kappa_max)
    kappa = np.where(r < 1e-12, 0.0, kappa)
    return float(kappa) if kappa.ndim == 0 else kappa


@dataclass(frozen=True)
class VonMisesMixture:
    """Finite mixture of von Mises densities."""

    weights: np.ndarray
    means: np.ndarray
    kappas: np.ndarray
    loglik: float = np.nan
    aic: float = np.nan

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("weights must be nonnegative and sum to 1")
        w = w / w.sum()
        for name, val in (("weights", w), ("means", np.mod(self.means, TWO_PI)),
                          ("kappas", np.asarray(self.kappas, float))):
            arr = np.array(val, float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.kappas < 0):
            raise ValueError("kappas must be nonnegative")

    @property
    def M(self):
        return self.weights.size

    @property
    def n_params(self):
        return 3 * self.M - 1

    def _components(self, theta):
        theta = np.asarray(theta, float)
        x = np.subtract.outer(theta, self.means)
        base = np.exp(self.kappas * (np.cos(x) - 1.0) - _log_vm_norm(self.kappas))
        return x, base

    def pdf(self, theta):
        _, base = self._components(theta)
        return base @ self.weights

    def deriv(self, theta, order):
        """Analytic derivative of order 1, 2 or 4."""
        x, base = self._components(theta)
        k = self.kappas
        s, c = np.sin(x), np.cos(x)
        if order == 1:
            poly = -k * s
        elif order == 2:
            poly = k * (k * s**2 - c)
        elif order == 4:
            poly = (k**4 * s**4 - 6 * k**3 * s**2 * c - 7 * k**2 * s**2
                    + 3 * k**2 + k * c)
        else:
            raise ValueError("order must be 1, 2 or 4")
        return (poly * base) @ self.weights

    def roughness(self, order=4, grid_size=4096):
        """``integral (f^(order))^2`` by the periodic trapezoid rule."""
        theta = np.arange(grid_size) * (TWO_PI / grid_size)
        vals = self.deriv(theta, order)
        return float(np.sum(vals**2) * TWO_PI / grid_size)

    def sample(self, n, rng):
        comp = rng.choice(self.M, size=n, p=self.weights)
        out = np.empty(n)
        for j in range(self.M):
            sel = comp == j
            out[sel] = rng.vonmises(0.0, self.kappas[j], size=int(sel.sum())) + self.means[j]
        return np.mod(out, TWO_PI)


def _circular_kmeans(theta, M, rng, n_iter=50):
    # k-means++ seeding, then Lloyd steps with circular means
    centers = [theta[rng.integers(theta.size)]]
    for _ in range(1, M):
        d = np.min(1.0 - np.cos(np.subtract.outer(theta, np.array(centers))), axis=1)
        if d.sum() <= 0:
            break
        centers.append(theta[rng.choice(theta.size, p=d / d.sum())])
    centers = np.array(centers)
    for _ in range(n_iter):
        lab = np.argmax(np.cos(np.subtract.outer(theta, centers)), axis=1)
        new = centers.copy()
        for j in range(centers.size):
            sel = lab == j
            if sel.any():
                new[j] = np.arctan2(np.sin(theta[sel]).sum(), np.cos(theta[sel]).sum())
        if np.allclose(new, centers):
            break
        centers = new
    return np.argmax(np.cos(np.subtract.outer(theta, centers)), axis=1)


def _em(theta, labels, M, max_iter=200, tol=1e-8):
    w, mu, kappa, ll, status = em_fit(theta, labels.astype(np.int64), M, max_iter, tol)
    if status == COLLAPSED:
        raise FitFailure("a mixture component lost all its weight")
    if status != OK:
        raise FitFailure("non-finite log-likelihood")
    return w, mu, kappa, ll


def fit_vm_mixture(sample, M_max=5, random_state=0, max_iter=200, tol=1e-8):
    """EM fits with 1..M_max components; the lowest-AIC fit is returned.

    Each fit starts from a circular k-means partition.  A fit whose
    component loses its weight is discarded (the smaller models remain
    candidates); :class:`FitFailure` is raised only if no fit survives.
    """
    sample = _as_sample(sample)
    M_max = check_k(M_max, "M_max")
    theta = np.asarray(sample.angles)
    seed = seed_from(random_state)
    best = None
    for M in range(1, min(M_max, np.unique(theta).size) + 1):
        rng = np.random.default_rng([seed, M])
        labels = _circular_kmeans(theta, M, rng) if M > 1 else np.zeros(theta.size, int)
        try:
            w, mu, kappa, ll = _em(theta, labels, M, max_iter, tol)
        except FitFailure:
            continue
        aic = 2 * (3 * M - 1) - 2 * ll
        if best is None or aic < best.aic:
            best = VonMisesMixture(w / w.sum(), mu, kappa, loglik=ll, aic=aic)
    if best is None:
        raise FitFailure("no mixture could be fitted")
    return best


# ---------------------------------------------------------------------------
# plug-in concentration for the second derivative

_ROUGH_K2 = 3.0 / (8.0 * np.sqrt(np.pi))  # integral of (phi'')^2


def second_derivative_amise(nu, n, roughness4):
    """Asymptotic MISE of the second-derivative estimate at concentration ``nu``."""
    s2 = -2.0 * np.log(nu)
    sigma = np.sqrt(s2)
    return _ROUGH_K2 / (n * sigma**5) + s2**2 * roughness4 / 4.0


def plugin_concentration(sample, mixture=None, M_max=5, random_state=0):
    """Concentration minimizing the second-derivative AMISE.

    The roughness of the fourth derivative comes from a fitted von Mises
    mixture (or the one supplied).  Returns the minimizer in (1e-4, 1-1e-4)
    found by golden-section search.
    """
    sample = _as_sample(sample)
    if mixture is None:
        mixture = fit_vm_mixture(sample, M_max=M_max, random_state=random_state)
    n = sample.n
    r4 = mixture.roughness(4)

    def objective(nu):
        return second_derivative_amise(nu, n, r4)

    if r4 <= 0:
        return NU_MIN
    sigma = (15.0 / (8.0 * np.sqrt(np.pi) * n * r4)) ** (1.0 / 9.0)
    guess = float(np.exp(-0.5 * sigma**2))
    if not NU_MIN < guess < NU_MAX:
        return NU_MIN if guess <= NU_MIN else NU_MAX
    res = minimize_scalar(objective, bracket=(NU_MIN, guess, NU_MAX), method="golden",
                          tol=1e-10)
    return float(np.clip(res.x, NU_MIN, NU_MAX))


def curvature_ratios(sample, nu_k, nu_pi, points):
    """``|f''_{nu_pi}| / f_{nu_k}^3`` at every turning point.

    Values follow the angular order of ``points.ordered()``.
    """
    sample = _as_sample(sample)
    theta, _ = points.ordered()
    dens = np.atleast_1d(KdeModel(sample, nu_k).pdf(theta))
    if np.any(dens < 1e-12):
        raise ZeroDensity("density vanishes at a turning point")
    curv = np.atleast_1d(KdeModel(sample, nu_pi).deriv(theta, 2))
    return np.abs(curv) / dens**3
