"""Relaxation function Y(t, lam): solution of D_k Y = -lam Y, Y(0) = 1.

In the Laplace domain Y^(s) = k^(s) / (s k^(s) + lam).  For t > 0 the time
derivatives satisfy

    L{d^j Y / dt^j}(s) = -lam s**(j-1) / (s k^(s) + lam),

the polynomial terms coming from the initial values being invisible to the
Talbot contour.  Batched evaluation over many (t, lam) pairs shares one
contour per t and reduces to the resolvent sums in the compiled core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, InversionError
from .kernels import Kernel, alternation_check, eval_k, k_l1_norm, laplace_k_unchecked
from .laplace_inversion import (
    DEFAULT_TALBOT_M,
    FIXED_TALBOT,
    InversionResult,
    _coarse_m,
    invert,
    invert_cross_checked,
    talbot_error,
    talbot_nodes,
)
from .report import Check, FAIL, VerificationReport, upper_bound_check

__all__ = [
    "relax",
    "relax_result",
    "relax_many",
    "relax_time_derivative",
    "relax_derivative_many",
    "RelaxationCurve",
    "relaxation_curve",
    "log_grid",
    "check_relax_bounds",
    "check_complete_monotonicity",
]

# tolerance policy: a bound fails only beyond this multiple of the propagated error
TOL_FACTOR = 10.0
_CHUNK = 4096


def _check_lam(lam):
    lam = float(lam)
    if not (lam >= 0.0) or not math.isfinite(lam):
        raise DomainError(f"lambda must be non-negative and finite, got {lam}")
    return lam


def _check_t(t):
    t = float(t)
    if not (t > 0.0) or not math.isfinite(t):
        raise DomainError(f"t must be positive and finite, got {t}")
    return t


def _y_hat(kernel, lam):
    def f(s):
        kh = laplace_k_unchecked(kernel, s)
        return kh / (s * kh + lam)
    return f


def relax_result(kernel: Kernel, lam: float, t: float) -> InversionResult:
    """Y(t, lam) with the Talbot/Stehfest cross-check attached."""
    lam = _check_lam(lam)
    t = _check_t(t)
    if lam == 0.0:
        return InversionResult(1.0, "exact", 0.0, disagreement=0.0)
    return invert_cross_checked(_y_hat(kernel, lam), t)


def relax(kernel: Kernel, lam: float, t: float) -> float:
    """Y(t, lam); exactly 1 when lam = 0."""
    return relax_result(kernel, lam, t).value


def _resolvent(kernel, t, lam, M, power):
    """Re sum w s**power / (s k^ + lam) on the Talbot contour, plus abs sums."""
    s, w = talbot_nodes(t, M)
    kh = laplace_k_unchecked(kernel, s)
    c = np.ascontiguousarray(w * (kh if power is None else s**power))
    q = np.ascontiguousarray(s * kh)
    out, mag = _backend.resolvent_sum(c, q, np.ascontiguousarray(lam, dtype=float))
    if not (np.all(np.isfinite(out)) and np.all(np.isfinite(mag))):
        raise InversionError("non-finite values on the Talbot contour")
    return out, mag


def _batched(kernel, lam, t, M, power, scale_by_lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~(lam >= 0)) or np.any(~np.isfinite(lam)):
        raise DomainError("lambda values must be non-negative and finite")
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise DomainError("times must be positive and finite")
    hi = np.empty((t.size, lam.size))
    err = np.empty_like(hi)
    # bound the (times x nodes) temporaries
    for i in range(0, t.size, _CHUNK):
        tc = t[i:i + _CHUNK]
        h_, mag = _resolvent(kernel, tc, lam, M, power)
        lo, _ = _resolvent(kernel, tc, lam, _coarse_m(M), power)
        hi[i:i + _CHUNK] = h_
        err[i:i + _CHUNK] = talbot_error(h_, lo, mag)
    if scale_by_lam:
        hi = -hi * lam
        err = err * lam
    return hi, err


def relax_many(kernel: Kernel, lam, t, M: int = DEFAULT_TALBOT_M):
    """Y on the product grid ``t x lam``.

    Returns
    -------
    values, errors : ndarray, shape (len(t), len(lam))
        Talbot values and error estimates.  Columns with lam = 0 are exactly 1.
    """
    vals, err = _batched(kernel, lam, t, M, None, False)
    zero = np.atleast_1d(np.asarray(lam, dtype=float)) == 0.0
    vals[:, zero] = 1.0
    err[:, zero] = 0.0
    return vals, err


def relax_derivative_many(kernel: Kernel, lam, t, order: int = 1,
                          M: int = DEFAULT_TALBOT_M):
    """d^j Y / dt^j on the product grid ``t x lam`` with error estimates."""
    if int(order) != order or order < 1:
        raise DomainError("derivative order must be a positive integer")
    return _batched(kernel, lam, t, M, int(order) - 1, True)


def relax_time_derivative(kernel: Kernel, lam: float, t: float, order: int = 1,
                          method: str = "laplace") -> float:
    """d^j Y(t, lam) / dt^j for t > 0.

    ``method="laplace"`` inverts -lam s**(j-1) / (s k^ + lam) on the Talbot
    contour.  ``method="fd"`` differentiates :func:`relax` by central
    differences in t and is kept as a fallback for diagnostics.
    """
    lam = _check_lam(lam)
    t = _check_t(t)
    if int(order) != order or order < 1:
        raise DomainError("derivative order must be a positive integer")
    if lam == 0.0:
        return 0.0
    if method == "laplace":
        j = int(order)

        def f(s):
            kh = laplace_k_unchecked(kernel, s)
            return -lam * s ** (j - 1) / (s * kh + lam)

        return invert(f, t, FIXED_TALBOT).value
    if method == "fd":
        return _fd_derivative(kernel, lam, t, int(order))
    raise DomainError(f"unknown derivative method {method!r}")


def _fd_derivative(kernel, lam, t, j):
    # central differences of the given order on a symmetric stencil in t
    h = 1e-2 * t
    k = np.arange(-j, j + 1)
    pts = t + h * k
    vals, _ = relax_many(kernel, [lam], pts)
    # weights of the j-th derivative on the 2j+1 point stencil
    V = np.vander(k.astype(float), increasing=True).T
    rhs = np.zeros(k.size)
    rhs[j] = math.factorial(j)
    wts = np.linalg.solve(V, rhs)
    return float(wts @ vals[:, 0]) / h**j


def log_grid(t_min: float, t_max: float, n: int) -> np.ndarray:
    if not (0 < t_min < t_max) or n < 2:
        raise DomainError("log grid needs 0 < t_min < t_max and n >= 2")
    return np.geomspace(t_min, t_max, int(n))


@dataclass(frozen=True)
class RelaxationCurve:
    kernel: Kernel
    lam: float
    t_grid: np.ndarray
    values: np.ndarray
    error_estimates: np.ndarray
    method: str = FIXED_TALBOT
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t_grid", "values", "error_estimates"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.t_grid.shape == self.values.shape == self.error_estimates.shape):
            raise DomainError("curve arrays must have equal length")
        if np.any(np.diff(self.t_grid) <= 0) or np.any(self.t_grid <= 0):
            raise DomainError("t_grid must be positive and increasing")


def relaxation_curve(kernel: Kernel, lam: float, t_grid, M: int = DEFAULT_TALBOT_M):
    lam = _check_lam(lam)
    t = np.asarray(t_grid, dtype=float)
    vals, err = relax_many(kernel, [lam], t, M)
    return RelaxationCurve(kernel, lam, t, vals[:, 0], err[:, 0],
                           metadata={"talbot_nodes": M})


def check_relax_bounds(kernel: Kernel, lam: float, t_grid) -> VerificationReport:
    """Pointwise check of the three scale bounds on Y.

    (a) lam Y <= ||k||_{L1(0,t)} / t
    (b) Y <= 1 / (1 + t lam / ||k||_{L1(0,t)})
    (c) -t k(t) dY/dt <= lam Y
    """
    lam = _check_lam(lam)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise DomainError("t_grid must be positive and increasing")
    Y, eY = relax_many(kernel, [lam], t)
    dY, edY = relax_derivative_many(kernel, [lam], t, 1)
    Y, eY, dY, edY = Y[:, 0], eY[:, 0], dY[:, 0], edY[:, 0]
    K = k_l1_norm(kernel, t)
    kt = eval_k(kernel, t)
    checks = []
    for i, ti in enumerate(t):
        tag = f"[t={ti:.6g}]"
        checks.append(upper_bound_check(
            "relax-rate-bound" + tag, "Y rate bound lam*Y <= |k|/t",
            lam * Y[i], K[i] / ti, TOL_FACTOR * lam * eY[i]))
        checks.append(upper_bound_check(
            "relax-resolvent-bound" + tag, "Y <= 1/(1 + t lam/|k|)",
            Y[i], 1.0 / (1.0 + ti * lam / K[i]), TOL_FACTOR * eY[i]))
        checks.append(upper_bound_check(
            "relax-derivative-bound" + tag, "-t k(t) dY/dt <= lam Y",
            -ti * kt[i] * dY[i], lam * Y[i],
            TOL_FACTOR * (ti * kt[i] * edY[i] + lam * eY[i])))
    return VerificationReport(tuple(checks), {"kernel": kernel.describe(), "lambda": lam})


def check_complete_monotonicity(curve: RelaxationCurve, max_order: int = 4) -> VerificationReport:
    """Sign alternation of divided differences of orders 1..max_order."""
    anchor = "complete monotonicity of Y in t"
    meta = {"kernel": curve.kernel.describe(), "lambda": curve.lam}
    if not (1 <= max_order <= 4):
        raise DomainError("max_order must lie in 1..4")
    if curve.t_grid.size < 64:
        c = Check("cm-grid-coverage", anchor, FAIL, float(curve.t_grid.size), 64.0,
                  math.nan, 0.0, note="insufficient grid: need >= 64 points")
        return VerificationReport((c,), meta)
    checks = tuple(
        alternation_check(f"cm-order{m}", anchor, curve.t_grid, curve.values, m,
                          curve.error_estimates, TOL_FACTOR)
        for m in range(1, max_order + 1)
    )
    return VerificationReport(checks, meta)
