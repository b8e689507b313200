"""Circular model densities with exact samplers, and the M1-M25 registry.

Primitive kinds:

* ``vM``    von Mises with concentration ``kappa``;
* ``WN``    wrapped normal with mean resultant length ``rho`` in (0, 1);
* ``WC``    wrapped Cauchy with ``rho`` in (0, 1);
* ``C``     cardioid with ``rho`` in [-1/2, 1/2];
* ``kssWN`` / ``kssvM``  sine-skewed versions, ``f(t) (1 + lam sin(k (t - mu)))``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e

from ._validation import TWO_PI, wrap
from .circular import CircularSample, n_series_terms

KINDS = ("vM", "WN", "WC", "C", "kssWN", "kssvM")
_BASE = {"kssWN": "WN", "kssvM": "vM"}


@dataclass(frozen=True)
class PrimitiveModel:
    """One circular distribution.

    Parameters
    ----------
    kind : str
        One of ``vM, WN, WC, C, kssWN, kssvM``.
    mu : float
        Location, radians.
    scale : float
        ``kappa >= 0`` for von Mises kinds, ``rho`` otherwise.
    skew : float
        Skewness ``lam`` in (-1, 1); sine-skewed kinds only.
    harmonic : int
        Positive integer ``k`` of the sine perturbation.
    """

    kind: str
    mu: float
    scale: float
    skew: float = 0.0
    harmonic: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "mu", float(wrap(float(self.mu))))
        base = _BASE.get(self.kind, self.kind)
        s = float(self.scale)
        if base == "vM" and s < 0:
            raise ValueError("kappa must be >= 0")
        if base in ("WN", "WC") and not 0.0 < s < 1.0:
            raise ValueError(f"{base} rho must lie in (0, 1)")
        if base == "C" and not -0.5 <= s <= 0.5:
            raise ValueError("cardioid rho must lie in [-0.5, 0.5]")
        if self.kind in _BASE:
            if not -1.0 < self.skew < 1.0:
                raise ValueError("skew must lie in (-1, 1)")
            if int(self.harmonic) != self.harmonic or self.harmonic < 1:
                raise ValueError("harmonic must be a positive integer")
        elif self.skew != 0.0:
            raise ValueError(f"{self.kind} takes no skew")

    @property
    def base(self):
        """The symmetric model underlying a sine-skewed kind."""
        if self.kind in _BASE:
            return PrimitiveModel(_BASE[self.kind], self.mu, self.scale)
        return self

    def pdf(self, theta):
        t = np.asarray(theta, float) - self.mu
        if self.kind in _BASE:
            return self.base.pdf(theta) * (1.0 + self.skew * np.sin(self.harmonic * t))
        if self.kind == "vM":
            return np.exp(self.scale * (np.cos(t) - 1.0)) / (TWO_PI * i0e(self.scale))
        if self.kind == "WN":
            P = max(n_series_terms(self.scale), 1)
            p = np.arange(1, P + 1)
            series = np.cos(np.multiply.outer(t, p)) @ (self.scale ** (p * p))
            return (1.0 + 2.0 * series) / TWO_PI
        if self.kind == "WC":
            r = self.scale
            return (1.0 - r * r) / (TWO_PI * (1.0 + r * r - 2.0 * r * np.cos(t)))
        return (1.0 + 2.0 * self.scale * np.cos(t)) / TWO_PI

    def sample(self, n, rng):
        """``n`` exact draws in [0, 2pi)."""
        if self.kind in _BASE:
            return self._skewed_sample(n, rng)
        if self.kind == "vM":
            x = rng.vonmises(0.0, self.scale, size=n)
        elif self.kind == "WN":
            x = rng.normal(0.0, np.sqrt(-2.0 * np.log(self.scale)), size=n)
        elif self.kind == "WC":
            x = -np.log(self.scale) * rng.standard_cauchy(size=n)
        else:
            x = self._cardioid_offsets(n, rng)
        return wrap(x + self.mu)

    def _cardioid_offsets(self, n, rng):
        # uniform proposal; envelope 1 + 2|rho|
        out = np.empty(0)
        bound = 1.0 + 2.0 * abs(self.scale)
        while out.size < n:
            m = 2 * (n - out.size) + 16
            t = rng.uniform(0.0, TWO_PI, size=m)
            keep = rng.uniform(0.0, bound, size=m) < 1.0 + 2.0 * self.scale * np.cos(t)
            out = np.concatenate([out, t[keep]])
        return out[:n]

    def _skewed_sample(self, n, rng):
        # the perturbation factor lies in [0, 2], so accept with prob factor/2
        base = self.base
        out = np.empty(0)
        while out.size < n:
            m = 2 * (n - out.size) + 16
            t = base.sample(m, rng)
            factor = 1.0 + self.skew * np.sin(self.harmonic * (t - self.mu))
            out = np.concatenate([out, t[rng.uniform(0.0, 2.0, size=m) < factor]])
        return out[:n]


@dataclass(frozen=True)
class MixtureModel:
    """Finite mixture ``sum_i w_i f_i`` of primitive models."""

    weights: tuple
    components: tuple
    id: str = ""

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        comps = tuple(self.components)
        if len(w) != len(comps) or not comps:
            raise ValueError("weights and components must be nonempty and aligned")
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    def pdf(self, theta):
        return sum(w * c.pdf(theta) for w, c in zip(self.weights, self.components))

    def sample(self, n, rng):
        """``n`` draws as a :class:`CircularSample`."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if len(self.components) == 1:
            return CircularSample(self.components[0].sample(n, rng))
        counts = rng.multinomial(n, self.weights)
        parts = [c.sample(m, rng) for c, m in zip(self.components, counts) if m]
        x = np.concatenate(parts)
        return CircularSample(x[rng.permutation(n)])


def model_density(model, theta):
    """Density of a primitive or mixture model at ``theta``."""
    return model.pdf(theta)


def model_sample(model, n, rng):
    """``n`` draws from ``model`` as a :class:`CircularSample`."""
    if isinstance(model, PrimitiveModel):
        model = MixtureModel((1.0,), (model,))
    return model.sample(n, rng)


def _vm(mu, kappa):
    return PrimitiveModel("vM", mu, kappa)


def _mix(id_, *pairs):
    return MixtureModel(tuple(w for w, _ in pairs), tuple(c for _, c in pairs), id_)


PI = np.pi

MODELS = {m.id: m for m in (
    _mix("M1", (1.0, _vm(PI, 1))),
    _mix("M2", (1.0, PrimitiveModel("WN", PI, 0.9))),
    _mix("M3", (1.0, PrimitiveModel("WC", PI, 0.8))),
    _mix("M4", (1.0, PrimitiveModel("C", PI, 0.5))),
    _mix("M5", (0.9, _vm(PI, 10)), (0.1, _vm(PI, 1))),
    _mix("M6", (0.2, _vm(2 * PI / 3, 3)), (0.6, _vm(PI, 1.4)), (0.2, _vm(4 * PI / 3, 3))),
    _mix("M7", (0.05, _vm(2 * PI / 3, 7)), (0.9, _vm(PI, 1)), (0.05, _vm(4 * PI / 3, 7))),
    _mix("M8", (0.05, _vm(2 * PI / 3, 4)), (0.9, _vm(PI, 1)), (0.05, _vm(4 * PI / 3, 7))),
    _mix("M9", (1.0, PrimitiveModel("kssWN", PI, 0.4, 0.99, 1))),
    _mix("M10", (1.0, PrimitiveModel("kssvM", PI, 1, 0.9, 1))),
    _mix("M11", (0.5, _vm(2, 5)), (0.5, _vm(4, 5))),
    _mix("M12", (0.9, _vm(PI / 2, 2)), (0.1, _vm(3 * PI / 2, 5))),
    _mix("M13", (0.5, _vm(PI - 1, 1.5)), (0.5, _vm(PI + 1, 1.5))),
    _mix("M14", (0.3, _vm(PI / 2, 6)), (0.5, _vm(3 * PI / 4, 2)), (0.2, _vm(7 * PI / 4, 4))),
    _mix("M15", (1.0, PrimitiveModel("kssWN", PI, 0.5, 0.9, 2))),
    _mix("M16", (1.0, PrimitiveModel("kssvM", PI, 1, 0.8, 2))),
    _mix("M17", (0.5, _vm(0, 4)), (0.5, _vm(PI, 4))),
    _mix("M18", (0.1, _vm(0, 2)), (0.6, _vm(PI / 2, 4)), (0.3, _vm(3 * PI / 2, 5))),
    _mix("M19", (0.5, _vm(0, 0.2)), (0.25, PrimitiveModel("WN", PI / 2, 0.5)),
         (0.25, PrimitiveModel("WC", 3 * PI / 2, 0.5))),
    _mix("M20", (0.75, _vm(PI, 1)), (0.25, _vm(7 * PI / 4, 10))),
    _mix("M21", (0.4, _vm(0.5, 6)), (0.4, _vm(3, 6)), (0.2, _vm(5, 24))),
    _mix("M22", (1 / 6, _vm(PI - 0.8, 30)), (0.5, _vm(PI, 1)), (1 / 6, _vm(PI, 30)),
         (1 / 6, _vm(PI + 0.8, 30))),
    _mix("M23", (0.2, _vm(PI / 2, 5)), (0.2, _vm(7 * PI / 8, 5)),
         (0.6, PrimitiveModel("WN", 7 * PI / 4, 0.8))),
    _mix("M24", (0.2, _vm(PI / 2, 6)), (0.2, _vm(7 * PI / 8, 2)),
         (0.6, PrimitiveModel("WC", 7 * PI / 4, 0.7))),
    _mix("M25", (1.0, PrimitiveModel("kssWN", PI, 0.5, 0.99, 3))),
)}

# number of modes of each model, used as the true k in power studies
MODEL_MODES = {**{f"M{i}": 1 for i in range(1, 11)},
               **{f"M{i}": 2 for i in range(11, 21)},
               **{f"M{i}": 3 for i in range(21, 26)}}


def get_model(name):
    """Look up a built-in model by id (``"M1"`` ... ``"M25"``)."""
    try:
        return MODELS[str(name).upper()]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from M1..M25") from None
