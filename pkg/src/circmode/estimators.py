"""scikit-learn style wrappers around the functional API.

Samples are 1-D arrays of angles in radians or column vectors ``(n, 1)``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_angles, check_concentration
from .calibration import DEFAULT_SIGMA, DEFAULT_VARPI
from .circular import CircularSample, KdeModel, default_grid_size, find_turning_points
from .concentration import critical_concentration, fit_vm_mixture
from .modetest import excess_mass_test, watson_test


class CircularKDE(BaseEstimator):
    """Wrapped-normal kernel density estimate.

    Parameters
    ----------
    nu : float, optional
        Concentration in (0, 1).  When omitted, the critical concentration
        for ``k`` modes is used.
    k : int
        Target number of modes for the critical concentration.
    """

    def __init__(self, nu=None, k=1):
        self.nu = nu
        self.k = k

    def fit(self, X, y=None):
        sample = CircularSample(check_angles(X))
        if self.nu is not None:
            nu = check_concentration(self.nu)
        else:
            nu = critical_concentration(sample, self.k).nu_k
        self.nu_ = nu
        self.model_ = KdeModel(sample, nu)
        pts = find_turning_points(self.model_, 2 * default_grid_size(self.model_.n_terms))
        self.modes_, self.antimodes_ = pts.modes, pts.antimodes
        self.n_modes_ = pts.n_modes
        self.n_features_in_ = 1
        return self

    def score_samples(self, X):
        """Log density at ``X``."""
        check_is_fitted(self, "model_")
        return np.log(np.maximum(self.model_.pdf(check_angles(X)), 1e-300))

    def score(self, X, y=None):
        return float(np.sum(self.score_samples(X)))


class VonMisesMixtureModel(BaseEstimator):
    """von Mises mixture chosen by AIC over ``1..M_max`` components."""

    def __init__(self, M_max=5, random_state=0, max_iter=200, tol=1e-8):
        self.M_max = M_max
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        sample = CircularSample(check_angles(X))
        mix = fit_vm_mixture(sample, M_max=self.M_max, random_state=self.random_state,
                             max_iter=self.max_iter, tol=self.tol)
        self.mixture_ = mix
        self.weights_, self.means_, self.kappas_ = mix.weights, mix.means, mix.kappas
        self.aic_ = mix.aic
        self.n_components_ = mix.M
        self.n_features_in_ = 1
        return self

    def score_samples(self, X):
        check_is_fitted(self, "mixture_")
        return np.log(np.maximum(self.mixture_.pdf(check_angles(X)), 1e-300))

    def score(self, X, y=None):
        return float(np.sum(self.score_samples(X)))

    def sample(self, n, random_state=None):
        check_is_fitted(self, "mixture_")
        return self.mixture_.sample(n, np.random.default_rng(random_state))


class _ModeTest(BaseEstimator):
    def reject(self, alpha=0.05):
        check_is_fitted(self, "result_")
        return self.result_.reject(alpha)

    def _store(self, res):
        self.result_ = res
        self.statistic_ = res.statistic
        self.pvalue_ = res.pvalue
        self.n_features_in_ = 1
        return self


class ExcessMassModeTest(_ModeTest):
    """Bootstrap excess-mass test of ``k`` modes against more than ``k``."""

    def __init__(self, k=1, B=200, random_state=None, sigma=DEFAULT_SIGMA,
                 varpi=DEFAULT_VARPI, plus_one=False, workers=1):
        self.k = k
        self.B = B
        self.random_state = random_state
        self.sigma = sigma
        self.varpi = varpi
        self.plus_one = plus_one
        self.workers = workers

    def fit(self, X, y=None):
        return self._store(excess_mass_test(
            check_angles(X), self.k, B=self.B, random_state=self.random_state,
            sigma=self.sigma, varpi=self.varpi, plus_one=self.plus_one,
            workers=self.workers))


class WatsonModeTest(_ModeTest):
    """Bootstrap Watson U^2 test of ``k`` modes against more than ``k``."""

    def __init__(self, k=1, B=200, random_state=None, plus_one=False, workers=1):
        self.k = k
        self.B = B
        self.random_state = random_state
        self.plus_one = plus_one
        self.workers = workers

    def fit(self, X, y=None):
        return self._store(watson_test(check_angles(X), self.k, B=self.B,
                                       random_state=self.random_state,
                                       plus_one=self.plus_one, workers=self.workers))
