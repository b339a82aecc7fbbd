"""Two-parameter Mittag-Leffler function on the real line.

E_{a,b}(z) = sum_j z**j / Gamma(a j + b).

Small |z| uses the power series.  For z < 0 outside the region where the
series is numerically safe, a real integral representation valid for
|arg z| > a*pi and b < 1 + a is integrated adaptively; larger b are brought
into range with the recurrence E_{a,b}(z) = z E_{a,a+b}(z) + 1/Gamma(b).
This module is independent of the Laplace inversion routines so that it can
serve as their oracle.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln, rgamma

from .errors import AccuracyError, DomainError

__all__ = ["ml", "ml_with_error", "ml_relaxation", "MAX_SERIES_TERMS"]

MAX_SERIES_TERMS = 200
_EPS = np.finfo(float).eps
# series is used while its largest term stays below this (limits cancellation)
_SERIES_GROWTH_LIMIT = 1e3


def _check(alpha, beta):
    if not (0.0 < alpha <= 1.0) or not math.isfinite(alpha):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not (beta > 0.0) or not math.isfinite(beta):
        raise DomainError(f"beta must be positive, got {beta}")


def _series_terms_needed(alpha, beta, x):
    """Number of terms and log of the largest term for |z| = x."""
    if x == 0.0:
        return 1, -gammaln(beta)
    j = np.arange(0, 20000)
    logt = j * math.log(x) - gammaln(alpha * j + beta)
    # past the peak the terms decay monotonically
    peak = int(np.argmax(logt))
    tail = np.nonzero(logt[peak:] < logt[peak] + math.log(_EPS) - 3.0)[0]
    if tail.size == 0:
        return j.size, float(logt[peak])
    return peak + int(tail[0]) + 1, float(logt[peak])


def _series(alpha, beta, z, nterms):
    j = np.arange(nterms)
    if z == 0.0:
        return float(rgamma(beta)), 0.0
    sign = np.sign(z) ** j
    logmag = j * math.log(abs(z)) - gammaln(alpha * j + beta)
    terms = sign * np.exp(logmag)
    val = math.fsum(terms)
    err = 4.0 * _EPS * (np.sum(np.abs(terms)) + 1.0) + abs(terms[-1])
    return val, err


def _integral_negative(alpha, beta, z):
    """Real integral representation for z < 0, 0 < alpha < 1, beta < 1 + alpha."""
    x = -z
    sa = math.sin(math.pi * (1.0 - beta))
    sb = math.sin(math.pi * (1.0 - beta + alpha))
    ca = math.cos(math.pi * alpha)
    p = (1.0 - beta) / alpha

    def kern(chi):
        num = chi * sa + x * sb
        den = chi * chi + 2.0 * chi * x * ca + x * x
        return chi**p * math.exp(-(chi ** (1.0 / alpha))) * num / den

    # the denominator is smallest near chi = x|cos(pi alpha)|
    peak = x * abs(ca) if ca < 0 else 0.0
    upper = 60.0**alpha
    pts = sorted({b for b in (peak, x, upper) if 0.0 < b < upper})
    val = 0.0
    err = 0.0
    edges = [0.0] + pts + [upper]
    for a_, b_ in zip(edges[:-1], edges[1:]):
        if b_ <= a_:
            continue
        v, e = integrate.quad(kern, a_, b_, epsabs=1e-15, epsrel=1e-13, limit=400)
        val += v
        err += e
    v, e = integrate.quad(kern, upper, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    val += v
    err += e
    return val / (alpha * math.pi), err / (alpha * math.pi)


def _alpha_one(beta, z):
    """E_{1,b}(z) for z < 0 away from the origin."""
    if beta == 1.0:
        return math.exp(z), _EPS * math.exp(z)
    if beta > 1.0:
        # E_{1,b}(-x) = 1/Gamma(b-1) int_0^1 exp(-x u) (1-u)**(b-2) du
        x = -z
        v, e = integrate.quad(lambda u: math.exp(-x * u), 0.0, 1.0, weight="alg",
                              wvar=(0.0, beta - 2.0), epsabs=1e-15, epsrel=1e-13)
        return v * float(rgamma(beta - 1.0)), e * abs(float(rgamma(beta - 1.0)))
    v, e = _alpha_one(beta + 1.0, z)
    return z * v + float(rgamma(beta)), abs(z) * e


def ml_with_error(alpha: float, beta: float, z: float) -> tuple[float, float]:
    """E_{alpha,beta}(z) together with an absolute error estimate."""
    alpha = float(alpha)
    beta = float(beta)
    z = float(z)
    _check(alpha, beta)
    if not math.isfinite(z):
        raise DomainError("z must be finite")
    x = abs(z)
    nterms, logmax = _series_terms_needed(alpha, beta, x)
    if z >= 0.0:
        if nterms > 20000 or logmax > 700.0:
            raise AccuracyError("E_{a,b}(z) overflows or the series does not converge "
                                "for this positive argument")
        return _series(alpha, beta, z, nterms)
    if nterms <= 20 * MAX_SERIES_TERMS and logmax < math.log(_SERIES_GROWTH_LIMIT):
        return _series(alpha, beta, z, nterms)
    if alpha == 1.0:
        val, err = _alpha_one(beta, z)
    else:
        shifts = 0
        b = beta
        # keep b <= 1: the representation loses accuracy as b approaches 1 + a
        while b > 1.0 + 1e-12:
            b -= alpha
            shifts += 1
        val, err = _integral_negative(alpha, b, z)
        for _ in range(shifts):
            # E_{a,b+a}(z) = (E_{a,b}(z) - 1/Gamma(b)) / z
            val = (val - float(rgamma(b))) / z
            err = err / x
            b += alpha
    if not math.isfinite(val):
        raise AccuracyError("integral representation failed", estimate=err)
    if err > 1e-8 * max(abs(val), 1e-300) and err > 1e-14:
        raise AccuracyError(
            f"Mittag-Leffler evaluation reached only {err:.2e}", estimate=err)
    return val, err


def ml(alpha: float, beta: float, z: float) -> float:
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for real z."""
    return ml_with_error(alpha, beta, z)[0]


def ml_relaxation(alpha: float, lam: float, t):
    """E_alpha(-lam t**alpha), vectorised over ``t``.

    This is the relaxation function of the single power-law kernel.
    """
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not (lam >= 0.0) or not math.isfinite(lam):
        raise DomainError("lambda must be non-negative")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(~np.isfinite(t_arr)):
        raise DomainError("t must be non-negative")
    flat = t_arr.ravel()
    out = np.empty_like(flat)
    for i, ti in enumerate(flat):
        if lam == 0.0 or ti == 0.0:
            out[i] = 1.0
        elif alpha == 1.0:
            out[i] = math.exp(-lam * ti)
        else:
            out[i] = ml(alpha, 1.0, -lam * ti**alpha)
    out = out.reshape(t_arr.shape)
    return out if out.ndim else float(out)
