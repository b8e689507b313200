"""Compiled EM iterations for von Mises mixtures.

The scaled Bessel functions come straight from ``scipy.special``'s Cython
exports, so the compiled loop and the Python-level code use the same
numerics.  Functions holding ctypes pointers cannot be cached on disk, so
they compile once per process.
"""

import ctypes

import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

_fn = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)
_i0e = _fn(get_cython_function_address("scipy.special.cython_special", "i0e"))
_i1e = _fn(get_cython_function_address("scipy.special.cython_special", "i1e"))

KAPPA_MAX = 1e5
TWO_PI = 2.0 * np.pi

OK = 0
COLLAPSED = 1
NONFINITE = 2


@njit
def resultant_ratio(kappa):
    return _i1e(kappa) / _i0e(kappa)


@njit
def inverse_ratio(r):
    """Scalar solution of ``I1(kappa)/I0(kappa) = r``."""
    if r < 1e-12:
        return 0.0
    if r >= 1.0:
        return KAPPA_MAX
    if r < 0.53:
        kappa = 2 * r + r**3 + 5 * r**5 / 6
    elif r < 0.85:
        kappa = -0.4 + 1.39 * r + 0.43 / (1 - r)
    else:
        kappa = 1.0 / (r * (1.0 - r) * (3.0 - r))
    kappa = min(max(kappa, 1e-12), KAPPA_MAX)
    for _ in range(3):
        a = resultant_ratio(kappa)
        da = 1.0 - a / kappa - a * a
        if da > 0:
            kappa = min(max(kappa - (a - r) / da, 1e-12), KAPPA_MAX)
    return kappa


@njit
def em_fit(theta, labels, M, max_iter, tol):
    """EM from a hard partition; returns ``(w, mu, kappa, loglik, status)``."""
    n = theta.shape[0]
    resp = np.zeros((n, M))
    for i in range(n):
        resp[i, labels[i]] = 1.0
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    w = np.zeros(M)
    mu = np.zeros(M)
    kappa = np.zeros(M)
    lognorm = np.zeros(M)
    logp = np.zeros(M)
    prev = -np.inf
    ll = -np.inf
    for _ in range(max_iter + 1):
        for j in range(M):
            nk = 0.0
            c = 0.0
            s = 0.0
            for i in range(n):
                r = resp[i, j]
                nk += r
                c += r * cos_t[i]
                s += r * sin_t[i]
            if nk < 1e-8 * n:
                return w, mu, kappa, ll, COLLAPSED
            w[j] = nk / n
            mu[j] = np.arctan2(s, c)
            kappa[j] = inverse_ratio(np.hypot(c, s) / nk)
            lognorm[j] = np.log(TWO_PI * _i0e(kappa[j]))
        ll = 0.0
        for i in range(n):
            top = -np.inf
            for j in range(M):
                logp[j] = (np.log(w[j]) + kappa[j] * (np.cos(theta[i] - mu[j]) - 1.0)
                           - lognorm[j])
                if logp[j] > top:
                    top = logp[j]
            tot = 0.0
            for j in range(M):
                logp[j] = np.exp(logp[j] - top)
                tot += logp[j]
            ll += top + np.log(tot)
            for j in range(M):
                resp[i, j] = logp[j] / tot
        if not np.isfinite(ll):
            return w, mu, kappa, ll, NONFINITE
        if abs(ll - prev) < tol:
            break
        prev = ll
    return w, mu, kappa, ll, OK
