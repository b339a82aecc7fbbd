"""Subordination density psi(t, tau) and the matching Monte-Carlo sampler.

The relaxation function is a Laplace transform in the variable tau,

    Y(t, lam) = int_0^inf psi(t, tau) exp(-lam tau) d tau,
    psi(t, .) = L^{-1}{ k^(s) exp(-tau s k^(s)) }(t),

so psi(t, .) is a probability density and the fundamental solution is a
psi-mixture of heat kernels exp(-|x|**2 / (4 tau)) / (4 pi tau)**(n/2).

Inverting k^ exp(-tau phi(s)), phi(s) = s k^(s), on the fixed Talbot contour
fails once tau is large: for exponents above 1/2 the factor exp(-tau phi)
grows on the left arm of the contour.  The integrand exp(s t - tau phi(s))
has a real saddle s* with t = tau phi'(s*); each tau therefore gets a
contour through max(s*, 2M/(5t)) and enough nodes to resolve the peak of
width 1/sqrt(tau phi''(s*)) there.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, SamplingError
from .kernels import Kernel, eval_k, k_l1_norm, laplace_k_unchecked
from .laplace_inversion import DEFAULT_TALBOT_M, talbot_contour, talbot_error
from .relaxation import relax_many
from .report import VerificationReport, skipped_check, upper_bound_check

__all__ = [
    "SubordinationDensity",
    "psi",
    "psi_values",
    "subordination_density",
    "reconstruct_Y",
    "sample_positions",
    "compare_sampler_to_solver",
    "verify_subordination",
    "MASS_TOLERANCE",
    "NEGATIVE_TOLERANCE",
]

MASS_TOLERANCE = 1e-3
NEGATIVE_TOLERANCE = 1e-8
TAIL_MASS = 1e-4
DEFAULT_TAU_POINTS = 1024
MIN_SAMPLES = 10_000
_MAX_NODES = 2048
_CHUNK = 1 << 16
_REFINE_TOL = 1e-4
# beyond this saddle psi <= exp(g(s*)) underflows
_LOG_S_MAX = 600.0
_NODE_DOUBLINGS = 3
_MAX_POINTS = 16384


def _saddle(kernel, t, tau):
    """Real saddle s* of g(s) = s t - tau phi(s) and the curvature s*^2 g''(s*)."""
    c, a = kernel.coefficients, kernel.exponents

    # t = tau sum c a s**(a - 1), solved for x = log s
    def f(x):
        return math.log(tau * float(np.sum(c * a * np.exp((a - 1.0) * x)))) - math.log(t)

    lo, hi = -50.0, 50.0
    while f(lo) < 0:
        lo -= 50.0
    while f(hi) > 0:
        hi += 50.0
    x = optimize.brentq(f, lo, hi, xtol=1e-12)
    if x > _LOG_S_MAX:
        return math.inf, math.inf
    s = math.exp(x)
    return s, tau * float(np.sum(c * a * (1.0 - a) * s**a))


def _saddle_point_value(kernel, t, tau, s, curv):
    """Steepest-descent value k^(s*) exp(g(s*)) / sqrt(2 pi g''(s*)).

    Used only when resolving the peak would need more than the node cap;
    its relative error is O(1/curv).
    """
    kh = float(np.real(laplace_k_unchecked(kernel, s)))
    g = s * (t - tau * kh)
    val = kh * math.exp(g) * s / math.sqrt(2.0 * math.pi * curv)
    return val, val / curv


def _node_count(curv, M):
    # the peak at the saddle needs node spacing r pi / M below its width
    need = 2.0 * math.pi * math.sqrt(curv)
    if need > _MAX_NODES:
        return -1
    m = max(M, int(math.ceil(need)))
    return m + (-m) % 8


def _contour_sum(kernel, t, tau, r, M):
    s, c = talbot_contour(np.full(tau.size, t), M, r)
    kh = laplace_k_unchecked(kernel, s)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = c * kh * np.exp(t * s - tau[:, None] * s * kh)
        hi, mag = terms.real.sum(axis=1), np.abs(terms).sum(axis=1)
    # non-finite rows get an infinite error and lose the node-count selection
    bad = ~(np.isfinite(hi) & np.isfinite(mag))
    hi[bad], mag[bad] = 0.0, np.inf
    return hi, mag


def psi_values(kernel: Kernel, t: float, tau, M: int = DEFAULT_TALBOT_M):
    """psi(t, tau) for an array of tau >= 0, with error estimates.

    psi(t, 0) = k(t) exactly.  The error is the spread between M and
    M - M/4 contour nodes plus the roundoff of the contour sum; each tau
    uses the node count among M, 2M, 4M, 8M with the smallest error.
    """
    t = float(t)
    if not (t > 0) or not math.isfinite(t):
        raise DomainError("t must be positive and finite")
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(~(tau >= 0)) or np.any(~np.isfinite(tau)):
        raise DomainError("tau must be non-negative and finite")
    vals = np.zeros(tau.size)
    errs = np.zeros(tau.size)
    zero = tau == 0
    vals[zero] = float(eval_k(kernel, t))
    idx = np.flatnonzero(~zero)
    if idx.size == 0:
        return vals, errs
    r = np.empty(idx.size)
    nodes = np.empty(idx.size, dtype=int)
    for j, i in enumerate(idx):
        s_star, curv = _saddle(kernel, t, tau[i])
        if math.isinf(s_star):
            nodes[j] = 0
            continue
        nodes[j] = _node_count(curv, M)
        if nodes[j] < 0:
            vals[i], errs[i] = _saddle_point_value(kernel, t, tau[i], s_star, curv)
            continue
        r[j] = max(2.0 * nodes[j] / (5.0 * t), s_star)
    # per tau keep the node count with the smallest error estimate; large
    # counts resolve narrow spikes but lose digits far from them
    for base in np.unique(nodes[nodes > 0]):
        sel = nodes == base
        tt = tau[idx[sel]]
        best_v = np.zeros(tt.size)
        best_e = np.full(tt.size, np.inf)
        for m in (int(base) << j for j in range(_NODE_DOUBLINGS + 1)):
            rr = np.maximum(r[sel], 2.0 * m / (5.0 * t))
            hi, mag = _contour_sum(kernel, t, tt, rr, m)
            lo, _ = _contour_sum(kernel, t, tt, rr, m - m // 4)
            e = talbot_error(hi, lo, mag)
            better = e < best_e
            best_v[better], best_e[better] = hi[better], e[better]
        vals[idx[sel]] = best_v
        errs[idx[sel]] = best_e
    return vals, errs


def psi(kernel: Kernel, t: float, tau: float) -> float:
    """psi(t, tau) for positive t and tau."""
    if not (float(tau) > 0):
        raise DomainError("tau must be positive")
    return float(psi_values(kernel, t, [tau])[0][0])


@dataclass(frozen=True)
class SubordinationDensity:
    kernel: Kernel
    t: float
    tau_grid: np.ndarray
    values: np.ndarray
    mass: float
    error_estimates: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tau_grid", "values", "error_estimates"):
            v = getattr(self, name)
            if v is None:
                continue
            arr = np.array(v, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.tau_grid.shape != self.values.shape:
            raise DomainError("tau_grid and values must have equal length")
        if np.any(np.diff(self.tau_grid) <= 0) or np.any(self.tau_grid < 0):
            raise DomainError("tau_grid must be non-negative and increasing")

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def negative_flag(self) -> bool:
        """True when inversion noise pushes psi below -1e-8 somewhere."""
        return self.min_value < -NEGATIVE_TOLERANCE

    @property
    def mass_ok(self) -> bool:
        return abs(self.mass - 1.0) <= MASS_TOLERANCE

    def mean(self) -> float:
        return float(integrate.simpson(self.tau_grid * self.values, x=self.tau_grid))


def _tau_grid(t_char, tau_max, n):
    return np.concatenate([[0.0], np.geomspace(1e-4 * t_char, tau_max, n - 1)])


def subordination_density(kernel: Kernel, t: float, tau_points: int = DEFAULT_TAU_POINTS,
                          M: int = DEFAULT_TALBOT_M) -> SubordinationDensity:
    """psi(t, .) on a geometric tau grid covering all but 1e-4 of the mass.

    The grid starts at tau = 0 and 1e-4 t_char, t_char = t / ||k||_{L1(0,t)};
    tau_max starts at 8 t_char and doubles until the mass on
    [tau_max / 2, tau_max] drops below 1e-4.  Node count and grid size then
    doubles as needed, up to 16384 points.
    """
    t = float(t)
    if not (t > 0) or not math.isfinite(t):
        raise DomainError("t must be positive and finite")
    if int(tau_points) < 16:
        raise DomainError("tau_points must be at least 16")
    t_char = t / float(k_l1_norm(kernel, t))
    tau_max = 8.0 * t_char
    for _ in range(60):
        probe = np.linspace(0.5 * tau_max, tau_max, 65)
        v, _ = psi_values(kernel, t, probe, M)
        if integrate.simpson(np.abs(v), x=probe) < TAIL_MASS:
            break
        tau_max *= 2.0
    else:
        raise DomainError("subordination density tail did not decay")
    # refine until Simpson and trapezoid masses agree and the integrated
    # inversion error is small; near-classical kernels give a narrow spike
    points = int(tau_points)
    while True:
        tau = _tau_grid(t_char, tau_max, points)
        vals, errs = psi_values(kernel, t, tau, M)
        if not np.all(np.isfinite(errs)):
            raise DomainError("subordination density could not be inverted on the grid")
        mass = float(integrate.simpson(vals, x=tau))
        quad_gap = abs(mass - float(integrate.trapezoid(vals, x=tau)))
        inv_err = float(integrate.trapezoid(errs, x=tau))
        if quad_gap > _REFINE_TOL and points < _MAX_POINTS:
            points *= 2
        else:
            break
    return SubordinationDensity(kernel, t, tau, vals, mass, errs,
                                {"t_char": t_char, "tau_max": tau_max, "talbot_nodes": M,
                                 "tau_points": points, "quadrature_gap": quad_gap,
                                 "inversion_error": inv_err})


def reconstruct_Y(density: SubordinationDensity, lam) -> float | np.ndarray:
    """int psi(t, tau) exp(-lam tau) d tau on the density's grid."""
    if not density.mass_ok:
        raise DomainError(f"density mass {density.mass:.6g} is not within "
                          f"{MASS_TOLERANCE:g} of 1")
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(~(lam_arr >= 0)):
        raise DomainError("lambda must be non-negative")
    tau = density.tau_grid
    out = integrate.simpson(density.values[None, :] * np.exp(-np.outer(lam_arr, tau)),
                            x=tau, axis=1)
    return float(out[0]) if np.ndim(lam) == 0 else out


def _inverse_cdf(density):
    tau = density.tau_grid
    # noise below zero is clipped for sampling only
    p = np.clip(density.values, 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(tau))])
    if not (cdf[-1] > 0):
        raise SamplingError("subordination density has no mass")
    return cdf / cdf[-1], tau


def sample_positions(kernel: Kernel, t: float, count: int, rng_seed: int, n: int = 1,
                     density: SubordinationDensity | None = None,
                     workers: int = 1) -> np.ndarray:
    """Draw ``count`` points of the fundamental solution at time t in R^n.

    tau is drawn from psi(t, .) by inverse CDF on the density grid and the
    position from N(0, 2 tau I).  Samples come in fixed-size chunks with
    independent streams spawned from ``rng_seed``, so the output does not
    depend on ``workers``.
    """
    count = int(count)
    if count < 1:
        raise DomainError("count must be at least 1")
    if n not in (1, 2, 3):
        raise DomainError("dimension must be 1, 2 or 3")
    if density is None:
        density = subordination_density(kernel, t)
    if not density.mass_ok:
        raise SamplingError(f"degenerate density: mass {density.mass:.6g}")
    cdf, tau = _inverse_cdf(density)
    sizes = [min(_CHUNK, count - i) for i in range(0, count, _CHUNK)]
    seeds = np.random.SeedSequence(int(rng_seed)).spawn(len(sizes))

    def chunk(j):
        rng = np.random.default_rng(seeds[j])
        u = rng.random(sizes[j])
        z = rng.standard_normal((sizes[j], n))
        tj = np.interp(u, cdf, tau)
        return np.sqrt(2.0 * tj)[:, None] * z

    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            parts = list(ex.map(chunk, range(len(sizes))))
    else:
        parts = [chunk(j) for j in range(len(sizes))]
    return np.concatenate(parts, axis=0)


def _bin_probabilities(kernel, t, grid, edges):
    """Exact bin integrals of the one-dimensional spectral profile.

    The x1-marginal of the fundamental solution has Fourier series
    (1 / 2L) sum_k Y(t, xi_k**2) exp(i xi_k x) on the box, whatever n is.
    """
    xi = grid.dxi * grid.k
    Y, eY = relax_many(kernel, xi**2, [t])
    Y, eY = Y[0], eY[0]
    a, b = edges[:-1], edges[1:]
    nz = xi != 0
    ph = (np.exp(1j * np.outer(b, xi[nz])) - np.exp(1j * np.outer(a, xi[nz]))) / (1j * xi[nz])
    p = (b - a) * np.sum(Y[~nz]) + (ph @ Y[nz]).real
    err = (b - a) * np.sum(eY[~nz]) + np.abs(ph) @ eY[nz]
    return p / (2.0 * grid.L), err / (2.0 * grid.L)


def compare_sampler_to_solver(kernel: Kernel, t: float, n: int, count: int, grid,
                              seed: int = 0, bins: int = 64, min_inside: int | None = None,
                              density: SubordinationDensity | None = None,
                              workers: int = 1) -> VerificationReport:
    """Histogram of sampled x1 against the spectral profile from Y.

    Bins span +-4 standard deviations of x1.  A bin agrees when its count is
    within 3 binomial standard deviations (plus the profile's own error) of
    the expected count; ``min_inside`` bins must agree, by default 62 of 64
    scaled to ``bins``.
    """
    anchor = "sampler histogram vs spectral fundamental solution"
    meta = {"kernel": kernel.describe(), "t": float(t), "n": int(n), "count": int(count),
            "seed": int(seed), "bins": int(bins)}
    if int(count) < MIN_SAMPLES:
        c = skipped_check("sampler-histogram", anchor,
                          f"insufficient samples: {int(count)} < {MIN_SAMPLES}")
        return VerificationReport((c,), meta)
    if min_inside is None:
        min_inside = int(math.ceil(62 * bins / 64))
    if density is None:
        density = subordination_density(kernel, t)
    x = sample_positions(kernel, t, count, seed, n, density, workers)[:, 0]
    width = 4.0 * math.sqrt(2.0 * density.mean())
    if width >= grid.L:
        raise DomainError("box too small for the sampled profile")
    edges = np.linspace(-width, width, bins + 1)
    p, pe = _bin_probabilities(kernel, t, grid, edges)
    counts, _ = np.histogram(x, bins=edges)
    N = float(count)
    expected = N * p
    sd = np.sqrt(N * np.clip(p, 0.0, None) * (1.0 - np.clip(p, 0.0, 1.0)))
    dev = np.abs(counts - expected)
    outside = int(np.sum(dev > 3.0 * sd + N * pe))
    z = dev / np.where(sd > 0, sd, np.inf)
    chi2 = float(np.sum((counts - expected) ** 2 / np.where(expected > 0, expected, np.inf)))
    meta.update({"width": width, "max_z": float(z.max()), "chi2": chi2,
                 "max_bin_discrepancy": float(np.max(np.abs(counts / N - p)))})
    c = upper_bound_check("sampler-histogram", anchor, outside, bins - min_inside,
                          note=f"bins outside 3 sigma; chi2 = {chi2:.4g} over {bins} bins")
    return VerificationReport((c,), meta)


def verify_subordination(kernel: Kernel, times=(0.1, 1.0, 10.0),
                         lambdas=(0.1, 1.0, 10.0)) -> VerificationReport:
    """Normalization, sign and reconstruction of Y for each time."""
    lam = np.asarray(lambdas, dtype=float)
    checks = []
    for t in times:
        tag = f"[t={float(t):.6g}]"
        d = subordination_density(kernel, t)
        checks.append(upper_bound_check(
            "subordination-mass" + tag, "int psi(t, tau) d tau = 1",
            abs(d.mass - 1.0), MASS_TOLERANCE))
        checks.append(upper_bound_check(
            "subordination-nonnegative" + tag, "psi >= 0",
            max(0.0, -d.min_value), NEGATIVE_TOLERANCE))
        if not d.mass_ok:
            checks.append(skipped_check("subordination-reconstruction" + tag,
                                        "Y = int psi exp(-lam tau)", "mass check failed"))
            continue
        Yr = reconstruct_Y(d, lam)
        Y, _ = relax_many(kernel, lam, [t])
        checks.append(upper_bound_check(
            "subordination-reconstruction" + tag, "Y = int psi exp(-lam tau)",
            float(np.max(np.abs(Yr - Y[0]))), 1e-4))
    return VerificationReport(tuple(checks), {"kernel": kernel.describe()})
