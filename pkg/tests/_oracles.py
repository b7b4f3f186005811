"""Independent reference implementations used only by the test suite.

Everything here deliberately avoids the code paths (and the scipy special
functions) used by the package itself: the normal CDF is a Taylor series, its
quantile is a bisection on that series, and the binomial confidence bounds
come from direct pmf summation plus bisection. Slow but trustworthy.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the Taylor series
    Phi(x) = 1/2 + phi(x) * sum_k x^(2k+1) / (1*3*...*(2k+1)).

    Converges quickly for |x| up to ~10; callers stay within that range.
    """
    if x < -12.0:
        return 0.0
    if x > 12.0:
        return 1.0
    term = x
    total = x
    x2 = x * x
    k = 0
    while abs(term) > 1e-18 * max(abs(total), 1e-300) and k < 600:
        k += 1
        term *= x2 / (2 * k + 1)
        total += term
    phi = math.exp(-0.5 * x2) / _SQRT_2PI
    return 0.5 + phi * total


def normal_quantile(p: float) -> float:
    """Inverse of normal_cdf by bisection; accurate to ~1e-13."""
    assert 0.0 < p < 1.0
    lo, hi = -13.0, 13.0
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def _logfact(n: int) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, n + 1)))))


def binom_tail(s: int, n: int, p: float) -> float:
    """P[X >= s] for X ~ Binomial(n, p), by direct pmf summation."""
    if s <= 0:
        return 1.0
    if s > n:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    k = np.arange(s, n + 1)
    lf = _logfact(n)
    logpmf = lf[n] - lf[k] - lf[n - k] + k * math.log(p) + (n - k) * math.log1p(-p)
    return float(np.exp(logpmf).sum())


def binom_cdf(s: int, n: int, p: float) -> float:
    """P[X <= s]."""
    return 1.0 - binom_tail(s + 1, n, p)


def cp_lower(s: int, n: int, alpha: float) -> float:
    """One-sided exact lower confidence bound: the p solving P[X >= s] = alpha.

    Bisection on p; the tail is increasing in p.
    """
    if s == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if binom_tail(s, n, mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cp_upper(s: int, n: int, alpha: float) -> float:
    """One-sided exact upper confidence bound: the p solving P[X <= s] = alpha.

    The CDF is decreasing in p.
    """
    if s == n:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if binom_cdf(s, n, mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def binom_tail_rows(s_vals: np.ndarray, n: int, p_vals: np.ndarray) -> np.ndarray:
    """Vectorized binom_tail for paired (s, p) rows sharing one n."""
    lf = _logfact(n)
    k = np.arange(n + 1)
    p = np.clip(p_vals[:, None], 1e-300, 1.0 - 1e-16)
    logpmf = lf[n] - lf[k][None, :] - lf[n - k][None, :]
    logpmf = logpmf + k[None, :] * np.log(p) + (n - k)[None, :] * np.log1p(-p)
    pmf = np.exp(logpmf)
    mask = k[None, :] >= s_vals[:, None]
    return (pmf * mask).sum(axis=1)


def binom_cdf_rows(s_vals: np.ndarray, n: int, p_vals: np.ndarray) -> np.ndarray:
    return 1.0 - binom_tail_rows(s_vals + 1, n, p_vals)


def ring_weight_matrix(n: int, self_weight: float) -> np.ndarray:
    """Row-stochastic update matrix of mean-aggregation on an n-ring."""
    w = np.eye(n) * self_weight
    for i in range(n):
        nbrs = [(i - 1) % n, (i + 1) % n]
        share = (1.0 - self_weight) / len(set(nbrs))
        for j in set(nbrs):
            w[i, j] += share
    return w


def linear_consensus(initial: np.ndarray, weights: np.ndarray, rounds: int) -> np.ndarray:
    """Reference trajectory of x <- W x, shape (rounds+1, n, d)."""
    states = [np.array(initial, dtype=float)]
    for _ in range(rounds):
        states.append(weights @ states[-1])
    return np.stack(states)
