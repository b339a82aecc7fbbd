"""Memory kernels of the general Caputo-type operator.

Every supported kernel is a finite positive combination of power laws,

    k(t) = sum_i c_i * t**(-a_i) / Gamma(1 - a_i),   0 < a_i < 1,

so its Laplace transform ``sum_i c_i s**(a_i - 1)`` is a Stieltjes function
and all time-domain integrals have closed forms.  The three public variants
differ only in how the terms are specified.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import DomainError
from .report import VerificationReport, upper_bound_check, Check, FAIL, PASS

__all__ = [
    "Kernel",
    "PowerLaw",
    "MultiTerm",
    "DistributedOrder",
    "eval_k",
    "laplace_k",
    "k_l1_norm",
    "rate",
    "inverse_tk_integral",
    "check_conditions",
    "sonine_conjugate",
    "parse_kernel",
]


def _check_exponent(a):
    if not (0.0 < a < 1.0) or not math.isfinite(a):
        raise DomainError(f"kernel exponent must lie strictly inside (0, 1), got {a}")


class Kernel:
    """Common interface; subclasses provide ``coefficients`` and ``exponents``."""

    coefficients: np.ndarray
    exponents: np.ndarray

    def _set_terms(self, coefs, alphas):
        coefs = np.asarray(coefs, dtype=float)
        alphas = np.asarray(alphas, dtype=float)
        if coefs.ndim != 1 or coefs.shape != alphas.shape or coefs.size == 0:
            raise DomainError("kernel needs at least one (coefficient, exponent) pair")
        for a in alphas:
            _check_exponent(a)
        if np.any(~np.isfinite(coefs)) or np.any(coefs <= 0):
            raise DomainError("kernel coefficients must be strictly positive")
        coefs.setflags(write=False)
        alphas.setflags(write=False)
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "exponents", alphas)
        # coefficient of t**(-a) in k(t), with the Gamma factor folded in
        object.__setattr__(self, "_time_coefs", coefs / gamma(1.0 - alphas))

    @property
    def alpha_max(self) -> float:
        return float(self.exponents.max())

    @property
    def alpha_min(self) -> float:
        return float(self.exponents.min())

    def to_config(self) -> dict:
        raise NotImplementedError

    def describe(self) -> str:
        return json.dumps(self.to_config(), sort_keys=True)


@dataclass(frozen=True, eq=True)
class PowerLaw(Kernel):
    """k(t) = t**(-alpha) / Gamma(1 - alpha): the classical Caputo derivative."""

    alpha: float

    def __post_init__(self):
        _check_exponent(self.alpha)
        self._set_terms([1.0], [self.alpha])

    def to_config(self):
        return {"type": "power_law", "alpha": self.alpha}


@dataclass(frozen=True, eq=True)
class MultiTerm(Kernel):
    """k(t) = sum_i b_i t**(-a_i) / Gamma(1 - a_i); ``terms`` holds ``(b_i, a_i)``."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(b), float(a)) for b, a in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise DomainError("multi-term kernel needs at least one term")
        self._set_terms([b for b, _ in terms], [a for _, a in terms])

    def to_config(self):
        return {"type": "multi_term", "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True, eq=True)
class DistributedOrder(Kernel):
    """Distributed-order kernel discretised by a quadrature rule on (0, 1).

    ``weights`` already include the order density ``p(alpha)``, so that
    k(t) = sum_j weights[j] * t**(-nodes[j]) / Gamma(1 - nodes[j]).
    """

    nodes: tuple
    weights: tuple

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        weights = tuple(float(w) for w in self.weights)
        if len(nodes) != len(weights):
            raise DomainError("nodes and weights must have equal length")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        self._set_terms(weights, nodes)

    @classmethod
    def from_density(cls, density: Callable[[np.ndarray], np.ndarray], n_nodes: int = 8):
        """Gauss-Legendre discretisation of ``int_0^1 p(a) t**-a / Gamma(1-a) da``."""
        if n_nodes < 1:
            raise DomainError("need at least one quadrature node")
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        nodes = 0.5 * (x + 1.0)
        weights = 0.5 * w * np.asarray(density(nodes), dtype=float)
        keep = weights > 0
        return cls(tuple(nodes[keep]), tuple(weights[keep]))

    @classmethod
    def uniform(cls, n_nodes: int = 8):
        return cls.from_density(lambda a: np.ones_like(a), n_nodes)

    def to_config(self):
        return {"type": "distributed", "nodes": list(self.nodes),
                "weights": list(self.weights)}


def _positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("time argument must be strictly positive")
    return t


def _powsum(kernel: Kernel, t, shift):
    """sum_i c_i * t**(shift - a_i) / Gamma(1 + shift - a_i)."""
    t = np.asarray(t, dtype=float)
    a = kernel.exponents
    c = kernel.coefficients / gamma(1.0 + shift - a)
    out = np.zeros_like(t)
    for ci, ai in zip(c, a):
        out = out + ci * t ** (shift - ai)
    return out if out.ndim else float(out)


def eval_k(kernel: Kernel, t):
    """k(t) for t > 0 (scalar or array)."""
    return _powsum(kernel, _positive_time(t), 0.0)


def laplace_k(kernel: Kernel, s):
    """Laplace transform k^(s) = sum_i c_i s**(a_i - 1) for Re s > 0.

    Evaluation off the right half-plane (principal branch) is available
    through :func:`laplace_k_unchecked` for contour methods.
    """
    s_arr = np.asarray(s)
    if np.any(~(np.real(s_arr) > 0)):
        raise DomainError("Laplace variable must have positive real part")
    return laplace_k_unchecked(kernel, s)


def laplace_k_unchecked(kernel: Kernel, s):
    s = np.asarray(s)
    if not np.iscomplexobj(s):
        s = s.astype(float)
    out = np.zeros(s.shape, dtype=np.result_type(s, float))
    for ci, ai in zip(kernel.coefficients, kernel.exponents):
        out = out + ci * s ** (ai - 1.0)
    return out if out.ndim else out[()]


def k_l1_norm(kernel: Kernel, t):
    """int_0^t k(tau) dtau; zero at t = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(~np.isfinite(t)):
        raise DomainError("upper limit must be non-negative")
    return _powsum(kernel, t, 1.0)


def rate(kernel: Kernel, t):
    """||k||_{L1(0,t)} / t, the decay rate functional controlling the estimates."""
    t = _positive_time(t)
    return k_l1_norm(kernel, t) / t


def inverse_tk_integral(kernel: Kernel, t: float) -> float:
    """int_0^t ds / (s k(s)).

    Finite for every supported kernel because s k(s) >= c s**(1 - a_max).
    """
    t = float(_positive_time(t))
    if len(kernel.exponents) == 1:
        a = kernel.alpha_max
        c = kernel.coefficients[0]
        return float(gamma(1.0 - a) * t**a / (a * c))
    amax = kernel.alpha_max
    tc = kernel._time_coefs
    dif = amax - kernel.exponents

    def smooth(s):
        return 1.0 / np.sum(tc * s**dif)

    val, _ = integrate.quad(smooth, 0.0, t, weight="alg", wvar=(amax - 1.0, 0.0),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def sonine_conjugate(kernel: Kernel):
    """Return ``l`` with int_0^t k(t-s) l(s) ds = 1, or None when unknown.

    Only the single power law has a closed-form partner,
    l(t) = t**(alpha-1) / Gamma(alpha).
    """
    if not isinstance(kernel, PowerLaw):
        return None
    a = kernel.alpha
    g = gamma(a)

    def l(t):
        t = _positive_time(t)
        return t ** (a - 1.0) / g

    return l


def alternation_check(name, anchor, x, f, order, noise, scale=10.0):
    """Sign check (-1)**m f[x_i..x_{i+m}] >= 0 for one order m.

    ``noise`` is the absolute uncertainty of each sample of ``f``; the
    tolerance band is ``scale`` times its propagation through the difference
    table plus rounding.  ``measured`` is the worst violation in units of
    that band, so the check passes when it is at most 1.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), f.shape)
    tiny = np.finfo(float).tiny
    d, e = f.copy(), 4.0 * np.finfo(float).eps * np.abs(f) + noise
    for m in range(1, order + 1):
        span = x[m:] - x[:-m]
        d = (d[1:] - d[:-1]) / span
        e = (e[1:] + e[:-1]) / span
    band = scale * e + tiny
    violation = -((-1) ** order) * d
    worst = float(np.max(violation / band)) if d.size else 0.0
    return upper_bound_check(name, anchor, worst, 1.0, 0.0,
                             note="worst sign violation in tolerance-band units")


def check_conditions(kernel: Kernel, s_grid) -> VerificationReport:
    """Numerical checks of the admissibility conditions on a log-spaced s grid."""
    s = np.asarray(s_grid, dtype=float)
    meta = {"kernel": kernel.describe()}
    anchor = "kernel admissibility"
    if s.ndim != 1 or s.size < 8 or np.any(s <= 0) or np.any(np.diff(s) <= 0) \
            or math.log10(s[-1] / s[0]) < 6.0 - 1e-9:
        c = Check("grid-coverage", anchor, FAIL, float(s.size), 8.0, math.nan, 0.0,
                  note="insufficient grid: need >= 8 increasing points over >= 6 decades")
        return VerificationReport((c,), meta)

    kh = np.asarray(laplace_k(kernel, s), dtype=float)
    checks = [
        upper_bound_check("khat-positive", anchor, -kh.min(), 0.0,
                          note="measured is -min k^(s)"),
        upper_bound_check("khat-decreasing", anchor, np.max(np.diff(kh)), 0.0,
                          note="measured is max forward difference"),
    ]
    for m in range(1, 5):
        checks.append(alternation_check(f"khat-alternation-order{m}", "Stieltjes property",
                                        s, kh, m, 0.0))

    ls, lk = np.log(s), np.log(kh)
    top = ls >= ls[-1] - math.log(10.0)
    bot = ls <= ls[0] + math.log(10.0)
    slope_top = np.polyfit(ls[top], lk[top], 1)[0] if top.sum() > 1 else \
        (lk[-1] - lk[-2]) / (ls[-1] - ls[-2])
    slope_bot = np.polyfit(ls[bot], lk[bot], 1)[0] if bot.sum() > 1 else \
        (lk[1] - lk[0]) / (ls[1] - ls[0])
    checks += [
        upper_bound_check("large-s-khat-to-zero", "limit at infinity", slope_top, 0.0,
                          note="log-log slope of k^ over the top decade must be < 0"),
        upper_bound_check("large-s-skhat-to-infinity", "limit at infinity", -1.0 - slope_top, 0.0,
                          note="slope of s k^ = 1 + slope must be > 0"),
        upper_bound_check("small-s-khat-to-infinity", "limit at zero", slope_bot, 0.0,
                          note="log-log slope of k^ over the bottom decade must be < 0"),
        upper_bound_check("small-s-skhat-to-zero", "limit at zero", -1.0 - slope_bot, 0.0,
                          note="slope of s k^ = 1 + slope must be > 0"),
    ]
    checks.append(Check("inverse-tk-locally-integrable", "source-term hypothesis", PASS,
                        0.0, 0.0, 0.0, 0.0,
                        note="analytic: finite positive power sum gives "
                             "1/(t k(t)) <= C t**(a_max - 1)"))
    return VerificationReport(tuple(checks), meta)


def parse_kernel(spec) -> Kernel:
    """Build a kernel from a config mapping, a JSON string or a short spec.

    Short forms: ``power_law:0.5``, ``multi_term:1,0.3;2,0.7``,
    ``distributed:uniform:8``.
    """
    if isinstance(spec, Kernel):
        return spec
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            try:
                spec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DomainError(f"malformed kernel JSON: {exc}") from None
        else:
            return _parse_short(text)
    if not isinstance(spec, dict) or "type" not in spec:
        raise DomainError(f"kernel config must be a mapping with a 'type': {spec!r}")
    kind = spec["type"]
    try:
        if kind == "power_law":
            return PowerLaw(float(spec["alpha"]))
        if kind == "multi_term":
            return MultiTerm(tuple((float(b), float(a)) for b, a in spec["terms"]))
        if kind == "distributed":
            if "nodes" in spec:
                return DistributedOrder(tuple(spec["nodes"]), tuple(spec["weights"]))
            return DistributedOrder.uniform(int(spec.get("n_nodes", 8)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed kernel config {spec!r}: {exc}") from None
    raise DomainError(f"unknown kernel type {kind!r}")


def _parse_short(text: str) -> Kernel:
    kind, _, rest = text.partition(":")
    try:
        if kind == "power_law":
            return PowerLaw(float(rest))
        if kind == "multi_term":
            terms = []
            for item in rest.split(";"):
                b, a = item.split(",")
                terms.append((float(b), float(a)))
            return MultiTerm(tuple(terms))
        if kind == "distributed":
            form, _, n = rest.partition(":")
            if form == "uniform":
                return DistributedOrder.uniform(int(n or 8))
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed kernel spec {text!r}") from None
    raise DomainError(f"malformed kernel spec {text!r}")
