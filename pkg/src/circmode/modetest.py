"""Bootstrap tests of ``H0: k modes`` against ``more than k modes``.

Two tests share one p-value convention, ``#{T* >= T} / B``:

* the excess-mass test resamples from the calibration density and uses the
  excess-mass statistic;
* the Watson test resamples from the kernel estimate at the critical
  concentration and uses the U^2 distance between the empirical CDF and the
  estimate's CDF.

Every resample ``b`` draws from its own stream keyed by ``(seed, b)``, so
results do not depend on how resamples are spread over workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._emkernels import delta_from_sorted, delta_many
from ._validation import TWO_PI, check_k, child_rng, seed_from
from .calibration import DEFAULT_SIGMA, DEFAULT_VARPI, build_calibration
from .circular import CircularSample, KdeModel
from .concentration import critical_concentration
from .exceptions import InvalidK

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TestResult:
    """Outcome of one bootstrap test."""

    statistic: float
    pvalue: float
    B: int
    k: int
    method: str
    seed: int
    n_exceed: int = 0
    details: dict = field(default_factory=dict, compare=False)

    def reject(self, alpha):
        return self.pvalue <= alpha

    def to_dict(self):
        out = {"method": self.method, "k": self.k, "statistic": self.statistic,
               "pvalue": self.pvalue, "B": self.B, "seed": self.seed,
               "n_exceed": self.n_exceed}
        out.update(self.details)
        return out


TestResult.__test__ = False  # not a pytest class


def _as_sample(sample):
    return sample if isinstance(sample, CircularSample) else CircularSample(sample)


def _pvalue(observed, boot, plus_one):
    exceed = int(np.count_nonzero(boot >= observed - TIE_TOLERANCE))
    B = boot.size
    p = (exceed + 1) / (B + 1) if plus_one else exceed / B
    return p, exceed


def _chunks(B, workers):
    edges = np.linspace(0, B, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map_chunks(fn, args, B, workers):
    parts = _chunks(B, max(1, int(workers)))
    if workers <= 1 or len(parts) == 1:
        return np.concatenate([fn(*args, a, b) for a, b in parts])
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *args, a, b) for a, b in parts]
        return np.concatenate([f.result() for f in futs])


def _calibration_draws(density, n, seed, start, stop):
    out = np.empty((stop - start, n))
    for row, b in enumerate(range(start, stop)):
        out[row] = density.sample(n, child_rng(seed, b))
    return out


def _excess_mass_chunk(density, n, k, seed, start, stop):
    return delta_many(_calibration_draws(density, n, seed, start, stop), k)


def excess_mass_test(sample, k, B=200, random_state=None, sigma=DEFAULT_SIGMA,
                     varpi=DEFAULT_VARPI, plus_one=False, workers=1):
    """Excess-mass bootstrap test of ``k`` modes.

    Parameters
    ----------
    sample : CircularSample or array-like
    k : int
        Number of modes under the null hypothesis.
    B : int
        Number of resamples.
    random_state : int, Generator or None
        Source of the seed that keys every resample stream.
    sigma, varpi : float
        Shape parameters of the calibration density.
    plus_one : bool
        Use ``(#{T* >= T} + 1) / (B + 1)`` instead of ``#{T* >= T} / B``.
    workers : int
        Processes used for the resamples; the result does not depend on it.
    """
    sample = _as_sample(sample)
    k = check_k(k)
    if k + 1 > sample.n:
        raise InvalidK(f"k={k} needs at least {k + 1} points")
    if B < 1:
        raise ValueError("B must be >= 1")
    seed = seed_from(random_state)
    observed = float(delta_from_sorted(np.ascontiguousarray(sample.sorted), k)[0])
    density = build_calibration(sample, k, sigma=sigma, varpi=varpi, random_state=seed)
    boot = _map_chunks(_excess_mass_chunk, (density, sample.n, k, seed), B, workers)
    p, exceed = _pvalue(observed, boot, plus_one)
    return TestResult(observed, p, B, k, "excess-mass", seed, exceed,
                      {"nu_k": density.base.nu, "nu_pi": density.nu_pi,
                       "normalizer": density.normalizer})


# ---------------------------------------------------------------------------
# Watson U^2


def _u2_from_uniforms(u):
    """U^2 of probability-integral transforms ``u`` (any order)."""
    u = np.sort(u)
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.sum((u - (2 * i - 1) / (2 * n)) ** 2) - n * (u.mean() - 0.5) ** 2
                 + 1.0 / (12 * n))


def watson_u2_statistic(sample, k, nu=None):
    """Watson U^2 between the sample and the ``k``-modal kernel estimate.

    The reference CDF is that of the estimate at the critical concentration
    (or at ``nu`` when given), with origin at angle 0.
    """
    sample = _as_sample(sample)
    k = check_k(k)
    if nu is None:
        nu = critical_concentration(sample, k).nu_k
    model = KdeModel(sample, nu)
    return _u2_from_uniforms(model.cdf_from_zero(sample.sorted))


def _kde_draws(angles, sigma2, n, seed, b):
    rng = child_rng(seed, b)
    idx = rng.integers(0, angles.size, size=n)
    return np.mod(angles[idx] + rng.normal(0.0, np.sqrt(sigma2), size=n), TWO_PI)


def _watson_chunk(angles, nu, k, seed, start, stop):
    sigma2 = -2.0 * np.log(nu)
    out = np.empty(stop - start)
    for row, b in enumerate(range(start, stop)):
        out[row] = watson_u2_statistic(_kde_draws(angles, sigma2, angles.size, seed, b), k)
    return out


def watson_test(sample, k, B=200, random_state=None, plus_one=False, workers=1):
    """Watson U^2 bootstrap test of ``k`` modes.

    Resamples are drawn from the kernel estimate at the critical
    concentration (a resampled point plus wrapped-normal noise, which is
    that density exactly); each resample recomputes its own critical
    concentration and statistic.
    """
    sample = _as_sample(sample)
    k = check_k(k)
    if B < 1:
        raise ValueError("B must be >= 1")
    seed = seed_from(random_state)
    nu = critical_concentration(sample, k).nu_k
    observed = watson_u2_statistic(sample, k, nu=nu)
    angles = np.array(sample.angles)
    boot = _map_chunks(_watson_chunk, (angles, nu, k, seed), B, workers)
    p, exceed = _pvalue(observed, boot, plus_one)
    return TestResult(observed, p, B, k, "watson-u2", seed, exceed, {"nu_k": nu})
