"""Resampling density for the bootstrap excess-mass test.

The density is the kernel estimate at the critical concentration, reshaped
in two kinds of neighbourhoods:

* around every mode and antimode, a smooth bump whose curvature-to-height
  ratio matches a plug-in estimate, joined to the estimate on both sides by
  monotone C^1 links;
* around every saddle (a near-zero of the derivative without a sign
  change) outside those neighbourhoods, a single monotone link that removes
  the flat spot.

Everywhere else the density is the kernel estimate itself.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from ._validation import TWO_PI, check_k, seed_from, wrap
from .circular import (CircularSample, KdeModel, default_grid_size,
                       find_turning_points, wrapped_distance)
from .concentration import critical_concentration, plugin_concentration
from .exceptions import CollidingNeighborhoods

CDF_GRID = 8192
DEFAULT_SIGMA = 0.05
DEFAULT_VARPI = 0.1
# turning points and saddles lower than this fraction of the highest mode
# sit where the estimate is numerically zero; they are left unreshaped
RELATIVE_HEIGHT_FLOOR = 1e-6
_GL_NODES, _GL_WEIGHTS = leggauss(64)


@dataclass(frozen=True)
class LinkSpec:
    """Monotone C^1 bridge on ``[u, v]`` from value/slope ``(a0, b0)`` to ``(a1, b1)``.

    Both slopes must point the same way as ``a1 - a0`` (or be zero); under
    that condition the bridge's derivative keeps one sign on ``(u, v)``.
    """

    u: float
    v: float
    a0: float
    a1: float
    b0: float
    b1: float

    def __post_init__(self):
        if not self.v > self.u:
            raise ValueError("link needs v > u")
        if self.a0 == self.a1:
            raise ValueError("link needs a0 != a1")
        rise = self.a1 - self.a0
        if self.b0 * rise < 0 or self.b1 * rise < 0:
            raise ValueError("link slopes must agree in sign with a1 - a0")


def link_eval(spec, theta, order=0):
    """Value (``order=0``) or derivative (``order=1``) of the link at ``theta``."""
    theta = np.asarray(theta, float)
    d = spec.a0 - spec.a1
    h = spec.v - spec.u
    t = (theta - spec.u) / h
    p1 = 1.0 + 2.0 * t**3 - 3.0 * t**2
    p2 = 2.0 * t**3 - 3.0 * t**2
    r0 = 2.0 * spec.b0 / d
    r1 = 2.0 * spec.b1 / d
    e1 = np.exp((theta - spec.u) * r0)
    e2 = np.exp((spec.v - theta) * r1)
    if order == 0:
        out = 0.5 * d * (p1 * e1 + p2 * e2) + 0.5 * (spec.a0 + spec.a1)
    elif order == 1:
        dp = (6.0 * t**2 - 6.0 * t) / h
        out = 0.5 * d * (dp * e1 + p1 * e1 * r0 + dp * e2 - p2 * e2 * r1)
    else:
        raise ValueError("order must be 0 or 1")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BumpSpec:
    """Bump ``H (1 + delta x^2)^(eta^2 |c| / (2H))`` with ``x = (theta - center)/eta``.

    ``delta = -1`` gives a mode, ``+1`` an antimode.  At the centre the
    second derivative is ``delta * |c|``, so ``|K''| / K^3 = |c| / H^3``.
    """

    center: float
    height: float
    curvature: float
    eta: float
    delta: int

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("bump height must be positive")
        if not self.eta > 0:
            raise ValueError("bump width must be positive")
        if self.curvature == 0:
            raise ValueError("bump curvature must be nonzero")
        if self.delta not in (-1, 1):
            raise ValueError("delta must be -1 (mode) or +1 (antimode)")

    @property
    def exponent(self):
        return self.eta**2 * abs(self.curvature) / (2.0 * self.height)

    @property
    def curvature_ratio(self):
        return abs(self.curvature) / self.height**3


def bump_eval(spec, theta, order=0):
    """Value, first or second derivative of the bump."""
    theta = np.asarray(theta, float)
    x = (theta - spec.center) / spec.eta
    base = 1.0 + spec.delta * x**2
    e = spec.exponent
    if order == 0:
        out = spec.height * base**e
    elif order == 1:
        out = spec.height * e * base ** (e - 1.0) * 2.0 * spec.delta * x / spec.eta
    elif order == 2:
        dx = 2.0 * spec.delta * x / spec.eta
        out = spec.height * e * ((e - 1.0) * base ** (e - 2.0) * dx**2
                                 + base ** (e - 1.0) * 2.0 * spec.delta / spec.eta**2)
    else:
        raise ValueError("order must be 0, 1 or 2")
    return float(out) if out.ndim == 0 else out


def bump_width(height, curvature, level, delta, room):
    """Largest admissible bump width.

    The bump evaluated half a width from its centre must stay on the
    centre's side of the midpoint between ``height`` and ``level``; the
    width may not exceed ``room``.
    """
    c = abs(curvature)
    if delta < 0:
        cap = 2.0 * height * np.log(2.0 * height / (height + level)) / (c * np.log(4.0 / 3.0))
    else:
        cap = 2.0 * height * np.log((height + level) / (2.0 * height)) / (c * np.log(5.0 / 4.0))
    return float(min(np.sqrt(cap), room))


@dataclass(frozen=True)
class Segment:
    """Piece of the calibration density on ``(lo, hi)`` in unrolled coordinates."""

    lo: float
    hi: float
    tag: str
    spec: object

    def value(self, theta, order=0):
        if isinstance(self.spec, LinkSpec):
            return link_eval(self.spec, theta, order)
        return bump_eval(self.spec, theta, order)


@dataclass(frozen=True)
class TurningNeighborhood:
    """Constants of the reshaped region around one turning point."""

    center: float
    delta: int
    height: float
    curvature: float
    level: float
    left: float
    right: float
    eta: float
    sigma: float

    @property
    def inner(self):
        return self.center - self.eta / 2.0, self.center + self.eta / 2.0


@dataclass(frozen=True)
class CalibrationDensity:
    """Piecewise resampling density (see module docstring).

    ``__call__``/``raw`` evaluate the unnormalized function, ``pdf`` the
    normalized density.  Curvature ratios are matched by the unnormalized
    function; normalization divides them by ``normalizer**2``.
    """

    base: KdeModel
    nu_pi: float
    varpi: float
    neighborhoods: tuple
    saddles: np.ndarray
    saddle_halfwidth: float
    segments: tuple
    normalizer: float
    cdf_grid: np.ndarray = field(repr=False)
    cdf_values: np.ndarray = field(repr=False)
    skipped: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def k(self):
        return sum(1 for nb in self.neighborhoods if nb.delta < 0)

    @property
    def n_skipped(self):
        """Turning points left as in the kernel estimate (near-zero height)."""
        return int(np.size(self.skipped))

    @property
    def turning_points(self):
        return np.array([nb.center for nb in self.neighborhoods])

    @property
    def curvature_ratios(self):
        return np.array([abs(nb.curvature) / nb.height**3 for nb in self.neighborhoods])

    @property
    def junctions(self):
        pts = set()
        for s in self.segments:
            pts.update((s.lo, s.hi))
        return np.array(sorted(pts))

    def _eval(self, theta, order):
        theta = np.atleast_1d(np.asarray(theta, float))
        t = wrap(theta)
        out = (self.base.pdf(t) if order == 0 else self.base.deriv(t, order))
        out = np.array(out, float, ndmin=1)
        tags = np.full(t.shape, "kde", dtype=object)
        for seg in self.segments:
            for shift in (0.0, -TWO_PI, TWO_PI):
                tt = t + shift
                sel = (tt > seg.lo) & (tt < seg.hi)
                if not sel.any():
                    continue
                if isinstance(seg.spec, LinkSpec) and order == 2:
                    h = 1e-6
                    out[sel] = (seg.value(tt[sel] + h, 1) - seg.value(tt[sel] - h, 1)) / (2 * h)
                else:
                    out[sel] = seg.value(tt[sel], order)
                tags[sel] = seg.tag
        return out, tags

    def raw(self, theta, order=0):
        out, _ = self._eval(theta, order)
        return float(out[0]) if np.ndim(theta) == 0 else out

    __call__ = raw

    def pdf(self, theta):
        return self.raw(theta) / self.normalizer

    def tags(self, theta):
        return self._eval(theta, 0)[1]

    def grid(self, size, order=0):
        """Unnormalized values on ``2 pi j / size`` (FFT for the kernel part)."""
        theta = np.arange(size) * (TWO_PI / size)
        out = self.base.grid(size, order)
        for seg in self.segments:
            for shift in (0.0, -TWO_PI, TWO_PI):
                tt = theta + shift
                sel = (tt > seg.lo) & (tt < seg.hi)
                if sel.any():
                    out[sel] = seg.value(tt[sel], order)
        return out

    def cdf(self, theta):
        """Tabulated distribution function on [0, 2pi)."""
        return np.interp(wrap(np.asarray(theta, float)), self.cdf_grid, self.cdf_values)

    def sample(self, size, rng):
        """Inverse-CDF draws (any array shape) in [0, 2pi)."""
        u = rng.random(size)
        return wrap(np.interp(u, self.cdf_values, self.cdf_grid))

    def to_csv(self, path, points=2048):
        """Write ``theta, g, segment`` rows for plotting."""
        theta = np.arange(points) * (TWO_PI / points)
        vals, tags = self._eval(theta, 0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "g", "segment"])
            for t, v, tag in zip(theta, vals / self.normalizer, tags):
                w.writerow([f"{t:.10f}", f"{v:.12g}", tag])


def _level_crossing(model, level, lo, hi):
    fn = lambda t: model.pdf(t) - level  # noqa: E731
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise CollidingNeighborhoods("level not crossed between consecutive turning points")
    return brentq(fn, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)


def _neighborhoods(base, centers, tags, curvatures, sigmas, keep=None):
    m = centers.size
    keep = np.ones(m, bool) if keep is None else np.asarray(keep, bool)
    heights = np.array([base.pdf(c) for c in centers])
    ext = np.concatenate([[centers[-1] - TWO_PI], centers, [centers[0] + TWO_PI]])
    hext = np.concatenate([[heights[-1]], heights, [heights[0]]])
    out = []
    for i in np.flatnonzero(keep):
        c, h, d = centers[i], heights[i], int(tags[i])
        gap = min(abs(h - hext[i]), abs(h - hext[i + 2]))
        level = h + d * sigmas[i] * gap
        left = _level_crossing(base, level, ext[i], c)
        right = _level_crossing(base, level, c, ext[i + 2])
        eta = bump_width(h, curvatures[i], level, d, min(c - left, right - c))
        out.append(TurningNeighborhood(center=float(c), delta=d, height=float(h),
                                       curvature=float(curvatures[i]), level=float(level),
                                       left=float(left), right=float(right), eta=eta,
                                       sigma=float(sigmas[i])))
    m = len(out)
    for i in range(m):
        a, b = out[i], out[(i + 1) % m]
        nxt_left = b.left + (TWO_PI if i == m - 1 else 0.0)
        if m > 1 and a.right >= nxt_left:
            raise CollidingNeighborhoods(f"neighbourhoods {i} and {(i + 1) % m} overlap")
    return out


def _j_segments(base, nb, index):
    v, w = nb.inner
    bump = BumpSpec(nb.center, nb.height, nb.curvature, nb.eta, nb.delta)
    left = LinkSpec(nb.left, v, base.pdf(nb.left), bump_eval(bump, v),
                    base.deriv(nb.left, 1), bump_eval(bump, v, 1))
    right = LinkSpec(w, nb.right, bump_eval(bump, w), base.pdf(nb.right),
                     bump_eval(bump, w, 1), base.deriv(nb.right, 1))
    return [Segment(nb.left, v, f"J{index}-link-left", left),
            Segment(v, w, f"J{index}-bump", bump),
            Segment(w, nb.right, f"J{index}-link-right", right)]


def _inside_any(theta, nbs):
    for nb in nbs:
        for shift in (0.0, -TWO_PI, TWO_PI):
            if nb.left < theta + shift < nb.right:
                return True
    return False


def _saddle_segments(base, saddles, nbs, varpi):
    saddles = np.array([s for s in saddles if not _inside_any(s, nbs)])
    if saddles.size == 0:
        return saddles, 0.0, []
    pts = np.concatenate([saddles, [nb.left for nb in nbs], [nb.right for nb in nbs]])
    dist = wrapped_distance(pts[:, None], pts[None, :])
    np.fill_diagonal(dist, np.inf)
    half = varpi * float(dist.min())
    segs = []
    for p, z in enumerate(saddles):
        lo, hi = z - half, z + half
        a0, a1 = base.pdf(lo), base.pdf(hi)
        b0, b1 = base.deriv(lo, 1), base.deriv(hi, 1)
        try:
            spec = LinkSpec(lo, hi, a0, a1, b0, b1)
        except ValueError:
            # the derivative changes sign inside: not a removable flat spot
            continue
        segs.append(Segment(lo, hi, f"L{p}", spec))
    return saddles, half, segs


def _integral_correction(base, seg):
    mid, rad = 0.5 * (seg.lo + seg.hi), 0.5 * (seg.hi - seg.lo)
    x = mid + rad * _GL_NODES
    return rad * float(_GL_WEIGHTS @ (seg.value(x) - base.pdf(x)))


def _assemble(base, nu_pi, centers, tags, curvatures, sigmas, varpi, saddles, keep=None):
    nbs = _neighborhoods(base, centers, tags, curvatures, sigmas, keep)
    skipped = centers[~keep] if keep is not None else np.empty(0)
    segs = []
    for i, nb in enumerate(nbs):
        segs.extend(_j_segments(base, nb, i))
    kept, half, lsegs = _saddle_segments(base, saddles, nbs, varpi)
    segs.extend(lsegs)
    norm = 1.0 + sum(_integral_correction(base, s) for s in segs)
    dens = CalibrationDensity(base=base, nu_pi=nu_pi, varpi=varpi, neighborhoods=tuple(nbs),
                              saddles=kept, saddle_halfwidth=half, segments=tuple(segs),
                              normalizer=norm, cdf_grid=np.zeros(2), cdf_values=np.zeros(2),
                              skipped=np.asarray(skipped, float))
    vals = dens.grid(CDF_GRID)
    vals = np.append(vals, vals[0])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]))])
    cum /= cum[-1]
    grid = np.arange(CDF_GRID + 1) * (TWO_PI / CDF_GRID)
    for arr in (grid, cum):
        arr.setflags(write=False)
    object.__setattr__(dens, "cdf_grid", grid)
    object.__setattr__(dens, "cdf_values", cum)
    return dens


def build_calibration(sample, k, sigma=DEFAULT_SIGMA, varpi=DEFAULT_VARPI, nu_pi=None,
                      random_state=0, max_retries=5):
    """Construct the resampling density for testing ``k`` modes.

    Parameters
    ----------
    sample : CircularSample or array-like
    k : int
        Number of modes under the null hypothesis.
    sigma : float or sequence
        Relative height (in (0, 1/2)) at which each turning-point region
        starts, one value per turning point or a scalar.
    varpi : float
        Saddle regions are ``varpi`` times the smallest spacing among
        saddles and region endpoints, in (0, 1/4).
    nu_pi : float, optional
        Plug-in concentration; estimated when omitted.
    random_state : int
        Seed of the mixture-fit initialization used for ``nu_pi``.
    max_retries : int
        On overlapping regions all ``sigma`` are halved, this many times.
    """
    sample = sample if isinstance(sample, CircularSample) else CircularSample(sample)
    k = check_k(k)
    if not 0 < varpi < 0.25:
        raise ValueError("varpi must lie in (0, 1/4)")
    crit = critical_concentration(sample, k)
    base = KdeModel(sample, crit.nu_k)
    points = find_turning_points(base, grid_size=2 * default_grid_size(base.n_terms))
    centers, tags = points.ordered()
    sig = np.broadcast_to(np.asarray(sigma, float), centers.shape).copy()
    if np.any((sig <= 0) | (sig >= 0.5)):
        raise ValueError("sigma must lie in (0, 1/2)")
    if nu_pi is None:
        nu_pi = plugin_concentration(sample, random_state=seed_from(random_state))
    curv = np.atleast_1d(KdeModel(sample, nu_pi).deriv(centers, 2))
    floor = RELATIVE_HEIGHT_FLOOR * float(np.max(base.pdf(centers)))
    keep = np.atleast_1d(base.pdf(centers)) > floor
    saddles = np.array([z for z in points.saddles if base.pdf(z) > floor])
    for attempt in range(max_retries + 1):
        try:
            return _assemble(base, float(nu_pi), centers, tags, curv, sig, varpi,
                             saddles, keep)
        except CollidingNeighborhoods:
            if attempt == max_retries:
                raise
            sig = sig / 2.0


def sample_calibration(density, n, rng):
    """``n`` inverse-CDF draws from a calibration density, as a sample."""
    return CircularSample(density.sample(n, rng))
