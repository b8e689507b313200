"""Angles, circular samples and the wrapped-normal kernel density estimator.

The estimator with concentration ``nu`` in (0, 1) is

    f(theta) = 1/(2 pi) * [1 + 2 sum_{p>=1} nu^(p^2) Re(conj(m_p) e^{i p theta})]

where ``m_p`` is the p-th empirical trigonometric moment.  Everything is
computed from the moments, so a pointwise evaluation costs O(P) after an
O(nP) set-up, and a full grid costs one real FFT.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._validation import TWO_PI, check_angles, check_concentration, wrap
from .exceptions import DegenerateDensity

SERIES_TOLERANCE = 1e-12
SADDLE_TOLERANCE = 1e-3
ROOT_XTOL = 1e-12


class Angle(float):
    """A float kept in [0, 2pi) through construction and arithmetic."""

    def __new__(cls, value):
        return super().__new__(cls, float(wrap(float(value))))

    def __add__(self, other):
        return Angle(float(self) + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Angle(float(self) - float(other))

    def __rsub__(self, other):
        return Angle(float(other) - float(self))

    def __neg__(self):
        return Angle(-float(self))

    def __repr__(self):
        return f"Angle({float(self)!r})"


def wrapped_distance(a, b):
    """Geodesic distance on the unit circle, in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a, float) - np.asarray(b, float), TWO_PI))
    out = np.minimum(d, TWO_PI - d)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CircularSample:
    """An immutable sample of angles in [0, 2pi).

    Duplicated angles are allowed.
    """

    angles: np.ndarray

    def __post_init__(self):
        arr = check_angles(self.angles)
        arr.setflags(write=False)
        srt = np.sort(arr)
        srt.setflags(write=False)
        object.__setattr__(self, "angles", arr)
        object.__setattr__(self, "_sorted", srt)

    @property
    def n(self):
        return self.angles.shape[0]

    @property
    def sorted(self):
        """Nondecreasing view of the angles."""
        return self._sorted

    def __len__(self):
        return self.n

    @classmethod
    def from_degrees(cls, degrees):
        return cls(np.deg2rad(np.asarray(degrees, float)))

    def rotate(self, by):
        return CircularSample(self.angles + by)

    def reflect(self):
        return CircularSample(-self.angles)

    def trig_moments(self, n_terms, start=1):
        """Complex moments ``mean(exp(i p Theta))`` for ``p = start..n_terms``."""
        p = np.arange(start, n_terms + 1)
        if p.size == 0:
            return np.empty(0, complex)
        return np.exp(1j * np.outer(p, self.angles)).mean(axis=1)


def n_series_terms(nu, tol=SERIES_TOLERANCE):
    """Largest ``P`` with ``nu**(P**2) >= tol`` (0 when even ``nu < tol``)."""
    if nu <= 0.0:
        return 0
    if nu >= 1.0:
        raise ValueError("concentration must be < 1")
    P = int(np.floor(np.sqrt(np.log(tol) / np.log(nu))))
    # guard the floor against rounding at exact powers
    while P > 0 and nu ** (P * P) < tol:
        P -= 1
    while nu ** ((P + 1) ** 2) >= tol:
        P += 1
    return P


def concentration_to_variance(nu):
    """Wrapped-normal variance parameter ``sigma^2 = -2 log(nu)``."""
    return -2.0 * np.log(nu)


@dataclass(frozen=True)
class KdeModel:
    """Wrapped-normal kernel density estimate.

    Parameters
    ----------
    sample : CircularSample
    nu : float
        Concentration in (0, 1); the kernel's mean resultant length.
    series_tolerance : float
        The series stops before the first term with ``nu**(p**2)`` below it.
    moments : ndarray, optional
        Precomputed moments ``m_1, m_2, ...`` of the sample (at least as
        many as the truncation needs).  Only a speed-up.
    """

    sample: CircularSample
    nu: float
    series_tolerance: float = SERIES_TOLERANCE
    moments: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.sample, CircularSample):
            object.__setattr__(self, "sample", CircularSample(self.sample))
        object.__setattr__(self, "nu", check_concentration(self.nu))
        if not self.series_tolerance > 0:
            raise ValueError("series_tolerance must be positive")
        P = n_series_terms(self.nu, self.series_tolerance)
        if self.moments is not None and len(self.moments) >= P:
            m = np.asarray(self.moments[:P], complex).copy()
        else:
            m = self.sample.trig_moments(P)
        p = np.arange(1, P + 1)
        coef = self.nu ** (p.astype(float) ** 2) * np.conj(m)
        coef.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "moments", m)
        object.__setattr__(self, "_p", p)
        object.__setattr__(self, "_coef", coef)

    @property
    def n_terms(self):
        return self._p.size

    @property
    def coefficients(self):
        """Fourier coefficients ``c_p`` with ``f = (1 + 2 Re sum c_p e^{ip theta})/(2pi)``."""
        return self._coef

    def _series(self, theta, factor):
        theta = np.asarray(theta, float)
        if self._p.size == 0:
            return np.zeros(theta.shape)
        e = np.exp(1j * np.multiply.outer(theta, self._p))
        return 2.0 * np.real(e @ (factor * self._coef))

    def pdf(self, theta):
        """Density at ``theta`` (radians, any real value)."""
        out = (1.0 + self._series(theta, 1.0)) / TWO_PI
        return float(out) if np.ndim(out) == 0 else out

    def deriv(self, theta, order=1):
        """Derivative of order 1 or 2 (or higher) of the density."""
        if order < 1:
            raise ValueError("order must be >= 1")
        out = self._series(theta, (1j * self._p) ** order) / TWO_PI
        return float(out) if np.ndim(out) == 0 else out

    def cdf_from_zero(self, theta):
        """``P(0 <= Theta <= theta)`` for ``theta`` in [0, 2pi]."""
        theta = np.asarray(theta, float)
        base = theta / TWO_PI
        if self._p.size:
            # integral of Re(c e^{ip t}) from 0 to theta, termwise
            e = np.exp(1j * np.multiply.outer(theta, self._p)) - 1.0
            base = base + 2.0 * np.real(e @ (self._coef / (1j * self._p))) / TWO_PI
        return float(base) if np.ndim(base) == 0 else base

    def cdf(self, start, end):
        """Probability of the arc traversed counterclockwise from ``start`` to ``end``."""
        span = float(end) - float(start)
        if not 0.0 <= span <= TWO_PI:
            span = float(np.mod(span, TWO_PI))
        if span == TWO_PI:
            return 1.0
        a = float(wrap(start))
        b = a + span
        if b <= TWO_PI:
            return float(self.cdf_from_zero(b) - self.cdf_from_zero(a))
        return float(1.0 - self.cdf_from_zero(a) + self.cdf_from_zero(b - TWO_PI))

    def grid(self, size, order=0):
        """Density (or derivative) on ``2 pi j / size``, ``j = 0..size-1``, by FFT."""
        P = self._p.size
        if size < 2 * P + 2:
            raise ValueError(f"grid of {size} points aliases {P} series terms")
        spec = np.zeros(size // 2 + 1, complex)
        spec[0] = 1.0 if order == 0 else 0.0
        spec[1:P + 1] = self._coef * (1j * self._p) ** order
        return np.fft.irfft(spec, n=size) * size / TWO_PI


def kde_eval(model, theta):
    return model.pdf(theta)


def kde_deriv(model, theta, order=1):
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    return model.deriv(theta, order)


def kde_cdf(model, start, end):
    return model.cdf(start, end)


@dataclass(frozen=True)
class TurningPointSet:
    """Modes, antimodes and saddles of a circular density, sorted by angle."""

    modes: np.ndarray
    antimodes: np.ndarray
    saddles: np.ndarray

    @property
    def n_modes(self):
        return len(self.modes)

    def ordered(self):
        """Turning points sorted by angle with a ``-1`` (mode) / ``+1`` (antimode) tag."""
        pts = np.concatenate([self.modes, self.antimodes])
        tag = np.concatenate([-np.ones(len(self.modes)), np.ones(len(self.antimodes))])
        order = np.argsort(pts, kind="stable")
        return pts[order], tag[order].astype(int)


def default_grid_size(n_terms, base=1024):
    size = base
    while size < 8 * n_terms:
        size *= 2
    return size


def derivative_floor(model):
    """Size of first-derivative values indistinguishable from truncation error.

    Twice the worst-case magnitude of the dropped derivative terms,
    ``2 sum_{p>P} p nu^(p^2) / (2 pi)``; signs below it are noise.
    """
    p = np.arange(model.n_terms + 1, model.n_terms + 400, dtype=float)
    tail = np.sum(p * np.exp(p * p * np.log(model.nu)))
    return max(4.0 * tail, 1e-13) / TWO_PI


def _sign_changes(d1, floor):
    """Indices ``(a, b)`` of consecutive informative grid points where ``d1`` flips sign.

    Points below ``floor`` carry no sign and are skipped, so a flip may
    span several grid cells.
    """
    idx = np.flatnonzero(np.abs(d1) > floor)
    if idx.size < 2:
        return idx[:0], idx[:0], np.zeros(0, bool)
    s = d1[idx] > 0
    nxt = np.roll(idx, -1)
    flip = s != np.roll(s, -1)
    return idx[flip], nxt[flip], s[flip]


def count_modes_on_grid(model, size):
    """Number of local maxima seen on a grid of ``size`` points."""
    d1 = model.grid(size, 1)
    _, _, down = _sign_changes(d1, derivative_floor(model))
    if down.size == 0:
        raise DegenerateDensity("density derivative never changes sign")
    return int(np.count_nonzero(down))


def find_turning_points(model, grid_size=1024, saddle_tolerance=SADDLE_TOLERANCE):
    """Locate modes, antimodes and saddles of a kernel density estimate.

    Sign changes of the first derivative on a uniform grid are refined by
    Brent's method to ~1e-12 rad; a ``+ -> -`` change is a mode and
    ``- -> +`` an antimode, which makes the two alternate by construction.
    Saddles are points where the derivative comes within
    ``saddle_tolerance * max|f'|`` of zero without changing sign (refined as
    zeros of the second derivative).

    Raises
    ------
    DegenerateDensity
        If the derivative never changes sign.
    """
    if grid_size < 256:
        raise ValueError("grid_size must be >= 256")
    size = grid_size
    while size < 2 * model.n_terms + 2:
        size *= 2
    step = TWO_PI / size
    d1 = model.grid(size, 1)
    a_idx, b_idx, down = _sign_changes(d1, derivative_floor(model))
    if down.size == 0:
        raise DegenerateDensity("density derivative never changes sign")

    def fprime(t):
        return model.deriv(t, 1)

    roots = []
    for a, b in zip(a_idx, b_idx):
        lo = a * step
        hi = b * step if b > a else b * step + TWO_PI
        flo, fhi = fprime(lo), fprime(hi)
        if flo == 0.0:
            r = lo
        elif fhi == 0.0:
            r = hi
        elif np.sign(flo) == np.sign(fhi):
            # grid sign disagreed with pointwise evaluation (rounding level)
            r = lo if abs(flo) < abs(fhi) else hi
        else:
            r = brentq(fprime, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
        roots.append(float(wrap(r)))
    roots = np.asarray(roots)
    modes = np.sort(roots[down])
    antimodes = np.sort(roots[~down])

    saddles = _near_saddles(model, d1, step, saddle_tolerance)
    if saddles.size and roots.size:
        keep = np.array([np.min(wrapped_distance(s, roots)) > 4 * step for s in saddles])
        saddles = saddles[keep]
    return TurningPointSet(modes=modes, antimodes=antimodes, saddles=np.sort(saddles))


def _near_saddles(model, d1, step, tol):
    absd = np.abs(d1)
    scale = absd.max()
    if scale == 0.0:
        return np.zeros(0)
    prev, nxt = np.roll(d1, 1), np.roll(d1, -1)
    same = (np.sign(prev) == np.sign(d1)) & (np.sign(nxt) == np.sign(d1)) & (d1 != 0)
    local_min = (absd <= np.abs(prev)) & (absd < np.abs(nxt))
    cand = np.flatnonzero(same & local_min & (absd < tol * scale))
    out = []

    def fsecond(t):
        return model.deriv(t, 2)

    for j in cand:
        lo, hi = (j - 1) * step, (j + 1) * step
        glo, ghi = fsecond(lo), fsecond(hi)
        if np.sign(glo) != np.sign(ghi) and glo != 0 and ghi != 0:
            z = brentq(fsecond, lo, hi, xtol=ROOT_XTOL)
        else:
            z = j * step
        if abs(model.deriv(z, 1)) < tol * scale:
            out.append(float(wrap(z)))
    return np.asarray(out)
