"""Input validation helpers shared by the functional and estimator APIs."""

import numbers

import numpy as np
from sklearn.utils import check_array

TWO_PI = 2.0 * np.pi


def wrap(theta):
    """Reduce angles to [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def check_angles(X, min_samples=1):
    """Validate a 1-D sample of angles (radians) and wrap it to [0, 2pi).

    Accepts a sequence, a 1-D array, a column vector of shape ``(n, 1)``,
    or a :class:`~circmode.circular.CircularSample`.
    """
    angles = getattr(X, "angles", X)
    arr = np.asarray(angles, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    arr = check_array(arr, ensure_2d=False, dtype=np.float64,
                      ensure_min_samples=min_samples)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sample of angles, got shape {arr.shape}")
    return wrap(arr)


def check_concentration(nu):
    nu = float(nu)
    if not 0.0 < nu < 1.0:
        raise ValueError(f"concentration must lie in (0, 1), got {nu}")
    return nu


def check_k(k, name="k"):
    if not isinstance(k, numbers.Integral) or k < 1:
        raise ValueError(f"{name} must be a positive integer, got {k!r}")
    return int(k)


def check_probability(p, name, lo_open=True, hi_open=True):
    p = float(p)
    lo_ok = p > 0.0 if lo_open else p >= 0.0
    hi_ok = p < 1.0 if hi_open else p <= 1.0
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} out of range: {p}")
    return p


def seed_from(random_state):
    """Turn ``None``/int/Generator into a reproducible integer seed."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**63 - 1))
    raise TypeError(f"cannot derive a seed from {type(random_state).__name__}")


def child_rng(seed, *key):
    """Generator for the stream identified by ``(seed, *key)``.

    Streams depend only on the key, never on how work is scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
