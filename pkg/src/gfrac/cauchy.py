"""Spectral solver for D_k u = Laplace(u) + h on a periodic box.

R^n (n = 1, 2, 3) is approximated by the box [-L, L)^n with M points per
axis.  The Fourier transform uses the unitary convention

    u~(xi) = (2 pi)**(-n/2) int exp(-i x.xi) u(x) dx,

discretised by the rectangle rule, so discrete Parseval holds exactly and
every mode evolves independently: u~(t, xi) = u~0(xi) Y(t, |xi|**2) without
source, and through the scalar representation with a source.  All norms are
computed on the frequency side, where the H2 norm is ||(1 + |xi|**2) u~||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, ShapeError
from .gode import TimeGrid, representation_weights, stepper_with_error
from .kernels import (
    Kernel,
    PowerLaw,
    eval_k,
    inverse_tk_integral,
    k_l1_norm,
    laplace_k_unchecked,
    rate,
)
from .laplace_inversion import invert
from .relaxation import TOL_FACTOR, relax_derivative_many, relax_many
from .report import Check, VerificationReport, upper_bound_check

__all__ = [
    "BoxGrid",
    "GridField",
    "SolutionSnapshot",
    "SPACE",
    "FREQUENCY",
    "surface_constant",
    "K_n",
    "gaussian",
    "single_mode",
    "spectral_tolerance",
    "solve_homogeneous",
    "solve_with_source",
    "verify_homogeneous_estimates",
    "verify_source_estimates",
    "resolvent_primitive",
    "DecayFit",
    "decay_exponent_fit",
    "verify_positivity",
]

SPACE, FREQUENCY = "space", "frequency"


@dataclass(frozen=True)
class BoxGrid:
    """Periodic grid on [-L, L)^n with M points per axis."""

    n: int
    L: float
    M: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise DomainError("dimension must be 1, 2 or 3")
        if not (self.L > 0) or not math.isfinite(self.L):
            raise DomainError("box half-length must be positive")
        if self.M < 8 or self.M & (self.M - 1):
            raise DomainError("M must be a power of two >= 8")

    @property
    def shape(self):
        return (self.M,) * self.n

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def dxi(self) -> float:
        return math.pi / self.L

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def mode_volume(self) -> float:
        return self.dxi**self.n

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.M)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wave numbers in FFT order."""
        return np.fft.fftfreq(self.M, d=1.0 / self.M).astype(np.int64)

    def coords(self):
        return np.meshgrid(*([self.x] * self.n), indexing="ij")

    @cached_property
    def _k2(self) -> np.ndarray:
        parts = np.meshgrid(*([self.k**2] * self.n), indexing="ij")
        return sum(parts)

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|**2 on the frequency grid; equal integer shells give equal values."""
        return self._k2 * self.dxi**2

    @cached_property
    def _sign(self) -> np.ndarray:
        parts = np.meshgrid(*([self.k] * self.n), indexing="ij")
        return np.where(sum(parts) % 2 == 0, 1.0, -1.0)

    @cached_property
    def shells(self):
        """Distinct |xi|**2 values and the inverse map onto the grid."""
        k2u, inv = np.unique(self._k2.ravel(), return_inverse=True)
        return k2u * self.dxi**2, inv.reshape(self.shape)

    def forward(self, u: np.ndarray) -> np.ndarray:
        c = (2.0 * math.pi) ** (-self.n / 2.0) * self.cell_volume
        return c * self._sign * np.fft.fftn(u)

    def inverse(self, uh: np.ndarray) -> np.ndarray:
        c = (2.0 * math.pi) ** (-self.n / 2.0) * self.mode_volume * self.M**self.n
        return (c * np.fft.ifftn(self._sign * uh)).real

    def freq_l2(self, uh) -> float:
        return float(np.sqrt(np.sum(np.abs(uh) ** 2) * self.mode_volume))

    def freq_h2(self, uh) -> float:
        return self.freq_l2((1.0 + self.xi2) * np.abs(uh))


@dataclass(frozen=True)
class GridField:
    grid: BoxGrid
    values: np.ndarray
    side: str = SPACE

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ShapeError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if self.side not in (SPACE, FREQUENCY):
            raise DomainError(f"unknown side {self.side!r}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", v)

    def to_frequency(self) -> "GridField":
        if self.side == FREQUENCY:
            return self
        return GridField(self.grid, self.grid.forward(self.values), FREQUENCY)

    def to_space(self) -> "GridField":
        if self.side == SPACE:
            return self
        return GridField(self.grid, self.grid.inverse(self.values), SPACE)

    def l2_norm(self) -> float:
        if self.side == SPACE:
            return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))
        return self.grid.freq_l2(self.values)

    def h2_norm(self) -> float:
        return self.grid.freq_h2(self.to_frequency().values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.to_space().values)))

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.to_space().values)) * self.grid.cell_volume)


@dataclass(frozen=True)
class SolutionSnapshot:
    time: float
    field: GridField
    l2: float
    h2: float
    sup: float
    dk_norm: float | None = None
    # propagated inversion/quadrature error of the L2 norm
    error: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def norms(self):
        return (self.l2, self.h2, self.sup)


def gaussian(grid: BoxGrid, sigma: float, amplitude: float = 1.0) -> GridField:
    """amplitude * exp(-|x|**2 / (2 sigma**2))."""
    if not (sigma > 0):
        raise DomainError("sigma must be positive")
    r2 = sum(c**2 for c in grid.coords())
    return GridField(grid, amplitude * np.exp(-r2 / (2.0 * sigma**2)))


def single_mode(grid: BoxGrid, ks, amplitude: float = 1.0) -> GridField:
    """amplitude * cos(xi0 . x) with xi0 = (pi / L) ks."""
    ks = tuple(int(k) for k in np.atleast_1d(ks))
    if len(ks) != grid.n:
        raise ShapeError("one wave number per dimension is required")
    phase = sum(k * grid.dxi * c for k, c in zip(ks, grid.coords()))
    return GridField(grid, amplitude * np.cos(phase))


def surface_constant(n: int) -> float:
    """Surface area of the unit sphere in R^n (with C_1 = 2)."""
    return {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[n]


def K_n(n: int) -> float:
    """Constant of the L2 bound on Y: K_n**2 = C_n (1/n + 1/(4 - n))."""
    return math.sqrt(surface_constant(n) * (1.0 / n + 1.0 / (4.0 - n)))


def spectral_tolerance(grid: BoxGrid, uh: np.ndarray, err: np.ndarray | None = None) -> float:
    """Sup-norm size of the outer quarter band of a spectrum plus propagated error.

    This measures how much of the field sits near the resolution limit, where
    truncation and aliasing act; it is the epsilon of the positivity checks.
    """
    outer = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.n):
        kk = np.abs(grid.k).reshape([-1 if i == ax else 1 for i in range(grid.n)])
        outer |= np.broadcast_to(kk > grid.M // 4, grid.shape)
    c = (2.0 * math.pi) ** (-grid.n / 2.0) * grid.mode_volume
    eps = c * float(np.sum(np.abs(uh[outer])))
    if err is not None:
        eps += c * float(np.sum(err))
    return eps + 16.0 * np.finfo(float).eps * c * float(np.sum(np.abs(uh)))


# ---------------------------------------------------------------- homogeneous

def _space_field(u0):
    if not isinstance(u0, GridField):
        raise DomainError("initial data must be a GridField")
    f = u0.to_space()
    if np.iscomplexobj(f.values) and np.max(np.abs(f.values.imag)) > 0:
        raise DomainError("initial data must be real")
    return GridField(f.grid, np.real(f.values), SPACE)


def _times(times):
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or t.size == 0 or np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise DomainError("times must be a non-empty list of positive reals")
    return t


def _homogeneous_spectra(kernel, u0, times):
    grid = u0.grid
    uh0 = grid.forward(u0.values)
    lam, inv = grid.shells
    Y, eY = relax_many(kernel, lam, times)
    return uh0, lam, inv, Y, eY


def solve_homogeneous(kernel: Kernel, u0: GridField, times) -> list[SolutionSnapshot]:
    """u(t) for D_k u = Laplace(u), u(0) = u0, at each requested time."""
    u0 = _space_field(u0)
    t = _times(times)
    grid = u0.grid
    uh0, lam, inv, Y, eY = _homogeneous_spectra(kernel, u0, t)
    snaps = []
    for i, ti in enumerate(t):
        uh = uh0 * Y[i][inv]
        e = np.abs(uh0) * eY[i][inv]
        dk = grid.freq_l2(grid.xi2 * uh)
        u = grid.inverse(uh)
        snaps.append(SolutionSnapshot(
            float(ti), GridField(grid, u), grid.freq_l2(uh), grid.freq_h2(uh),
            float(np.max(np.abs(u))), dk, grid.freq_l2(e),
            {"spectral_tolerance": spectral_tolerance(grid, uh, e)}))
    return snaps


def _continuity_times(times):
    lo = float(np.min(times))
    return lo * 10.0 ** -np.arange(4.0)


def verify_homogeneous_estimates(kernel: Kernel, u0: GridField, times,
                                 continuity_times=None) -> VerificationReport:
    """Check the homogeneous-problem estimates at each requested time.

    Checks per time: L2 and H2 non-expansiveness; derivative bounds
    (j/(e t))**j for j = 1, 2 in L2 and H2; the D_k bound by ||u0||_H2; the sup
    bound with the explicit K_n; the L2-data bounds on H2 and D_k norms; the
    L1 -> L2 decay bound; the L2 bound on Y itself; positivity for
    nonnegative data and the sup bound for bounded data.  Continuity at
    t = 0 is checked on a decreasing sequence of small times.
    """
    u0 = _space_field(u0)
    t = _times(times)
    grid = u0.grid
    n = grid.n
    uh0, lam, inv, Y, eY = _homogeneous_spectra(kernel, u0, t)
    abs0 = np.abs(uh0)
    l2_0, h2_0 = grid.freq_l2(uh0), grid.freq_h2(uh0)
    l1_0 = u0.l1_norm()
    sup_0 = float(np.max(np.abs(u0.values)))
    Kn = K_n(n)
    nonneg = bool(np.all(u0.values >= 0))
    c_sup = (2.0 * math.pi) ** (-n / 2.0) * grid.mode_volume
    D = {j: relax_derivative_many(kernel, lam, t, j) for j in (1, 2)}
    checks: list[Check] = []
    for i, ti in enumerate(t):
        tag = f"[t={ti:.6g}]"
        Yg, eg = Y[i][inv], eY[i][inv]
        uh = uh0 * Yg
        e_field = abs0 * eg
        e2 = grid.freq_l2(e_field)
        eh2 = grid.freq_h2(e_field)
        l2, h2 = grid.freq_l2(uh), grid.freq_h2(uh)
        u = grid.inverse(uh)
        sup = float(np.max(np.abs(u)))
        esup = c_sup * float(np.sum(e_field))
        rt = float(rate(kernel, ti))
        dk = grid.freq_l2(grid.xi2 * uh)
        edk = grid.freq_l2(grid.xi2 * e_field)
        tol = TOL_FACTOR
        checks += [
            upper_bound_check("l2-nonexpansive" + tag, "L2 non-expansiveness",
                              l2, l2_0, tol * e2),
            upper_bound_check("h2-nonexpansive" + tag, "H2 non-expansiveness",
                              h2, h2_0, tol * eh2),
            upper_bound_check("dk-l2-by-h2-data" + tag, "D_k u in L2 bounded by H2 data",
                              dk, h2_0, tol * edk),
            upper_bound_check("sup-bound" + tag, "sup bound with explicit K_n",
                              sup, Kn * l2_0 * rt ** (n / 4.0), tol * esup,
                              note=f"K_{n} = {Kn:.6g}"),
            upper_bound_check("h2-by-l2-data" + tag, "H2 bound for L2 data",
                              h2, (1.0 + rt) * l2_0, tol * eh2),
            upper_bound_check("dk-by-l2-data" + tag, "D_k bound for L2 data",
                              dk, rt * l2_0, tol * edk),
            upper_bound_check("l1-l2-decay" + tag, "L1 to L2 decay bound",
                              l2, Kn * rt ** (n / 4.0) * l1_0, tol * e2),
        ]
        Ynorm = grid.freq_l2(Yg)
        checks.append(upper_bound_check(
            "relaxation-l2-bound" + tag, "L2 bound on Y(t, .)", Ynorm,
            Kn * rt ** (n / 4.0), tol * grid.freq_l2(eg)))
        for j in (1, 2):
            dY, edY = D[j][0][i][inv], D[j][1][i][inv]
            b = (j / (math.e * ti)) ** j
            checks.append(upper_bound_check(
                f"dt{j}-l2" + tag, "time-derivative bound (j/(e t))**j in L2",
                grid.freq_l2(uh0 * dY), b * l2_0, tol * grid.freq_l2(abs0 * edY)))
            checks.append(upper_bound_check(
                f"dt{j}-h2" + tag, "time-derivative bound (j/(e t))**j in H2",
                grid.freq_h2(uh0 * dY), b * h2_0, tol * grid.freq_h2(abs0 * edY)))
        eps = spectral_tolerance(grid, uh, e_field)
        if nonneg:
            checks.append(upper_bound_check(
                "nonnegative" + tag, "nonnegative data give nonnegative solution",
                max(0.0, -float(u.min())), 0.0, 10.0 * eps,
                note="measured is the negative part; tolerance 10 x spectral epsilon"))
        checks.append(upper_bound_check(
            "bounded-by-data" + tag, "sup bounded by sup of data", sup, sup_0,
            tol * esup + 10.0 * eps))

    ct = np.unique(_continuity_times(t) if continuity_times is None
                   else _times(continuity_times))[::-1]
    Yc, eYc = relax_many(kernel, lam, ct)
    prev = None
    dists = []
    for i, ti in enumerate(ct):
        diff = uh0 * (1.0 - Yc[i][inv])
        e_field = abs0 * eYc[i][inv]
        d_h2 = grid.freq_h2(diff)
        d_l2 = grid.freq_l2(diff)
        dists.append((ti, d_h2, d_l2))
        checks.append(upper_bound_check(
            f"h2-distance-to-data[t={ti:.3g}]", "H2 distance to data at most 2 ||u0||_H2",
            d_h2, 2.0 * h2_0, TOL_FACTOR * grid.freq_h2(e_field)))
        if prev is not None:
            checks.append(upper_bound_check(
                f"h2-continuity-at-zero[t={ti:.3g}]", "continuity at t = 0 in H2",
                d_h2, prev[0], TOL_FACTOR * (grid.freq_h2(e_field) + prev[1]),
                note="distance must not grow as t decreases"))
            checks.append(upper_bound_check(
                f"l2-continuity-at-zero[t={ti:.3g}]", "continuity at t = 0 in L2",
                d_l2, prev[2], TOL_FACTOR * (grid.freq_l2(e_field) + prev[3]),
                note="distance must not grow as t decreases"))
        prev = (d_h2, grid.freq_h2(e_field), d_l2, grid.freq_l2(e_field))
    meta = {
        "kernel": kernel.describe(),
        "grid": {"n": grid.n, "L": grid.L, "M": grid.M},
        "continuity_distances": [[float(a), float(b), float(c)] for a, b, c in dists],
    }
    return VerificationReport(tuple(checks), meta)


# ---------------------------------------------------------------- source

def _source_values(h, grid, s):
    val = h(float(s))
    if isinstance(val, GridField):
        val = val.to_space().values
    val = np.asarray(val, dtype=float)
    if val.shape != grid.shape:
        raise ShapeError(f"source returned shape {val.shape}, expected {grid.shape}")
    return val


def _zero_mode_coefficient(h, grid, s):
    c = (2.0 * math.pi) ** (-grid.n / 2.0) * grid.cell_volume
    return c * float(np.sum(_source_values(h, grid, s)))


def _source_spectra(kernel, h, grid, times, n_steps):
    """Solution spectra u~(t_i), their error fields and h~(t_i)."""
    lam, inv = grid.shells
    pos = lam > 0
    lam_pos = lam[pos]
    # map grid modes to the index within lam_pos (-1 for the zero mode)
    idx = np.cumsum(pos) - 1
    inv_pos = np.where(pos[inv], idx[inv], -1)
    zero = inv_pos < 0
    inv_safe = np.where(zero, 0, inv_pos)
    out, errs, hts = [], [], []
    for ti in times:
        rw = representation_weights(kernel, lam_pos, [ti])
        ht = grid.forward(_source_values(h, grid, ti))
        A = rw.A[0][inv_safe]
        acc = A * ht
        acc_lo = acc.copy()
        err = rw.A_err[0][inv_safe] * np.abs(ht)
        for q in range(rw.r.shape[1]):
            d = grid.forward(_source_values(h, grid, ti - rw.r[0, q])) - ht
            acc += rw.W[0, q][inv_safe] * d
            err += rw.W_err[0, q][inv_safe] * np.abs(d)
        for q in range(rw.r_lo.shape[1]):
            d = grid.forward(_source_values(h, grid, ti - rw.r_lo[0, q])) - ht
            acc_lo += rw.W_lo[0, q][inv_safe] * d
        err = err + np.abs(acc - acc_lo)
        # the zero mode: D_k w = h~(t, 0) with w(0) = 0, no representation
        tg = TimeGrid.on_interval(ti, n_steps)
        f0 = np.array([_zero_mode_coefficient(h, grid, s) for s in tg.nodes])
        w, we = stepper_with_error(kernel, 0.0, f0, 0.0, tg)
        acc[zero] = w[-1]
        err[zero] = we[-1]
        out.append(acc)
        errs.append(err)
        hts.append(ht)
    return out, errs, hts


def solve_with_source(kernel: Kernel, h: Callable, grid: BoxGrid, times,
                      n_steps: int = 256) -> list[SolutionSnapshot]:
    """u(t) for D_k u = Laplace(u) + h, u(0) = 0.

    ``h(s)`` returns the source at time s as an array on ``grid`` (or a
    GridField).  Nonzero modes use the scalar representation with
    lam = |xi|**2; the xi = 0 mode is integrated by the stepper.
    """
    t = _times(times)
    if int(n_steps) < 4 or n_steps % 2:
        raise DomainError("n_steps must be an even integer >= 4")
    spectra, errs, hts = _source_spectra(kernel, h, grid, t, int(n_steps))
    snaps = []
    for ti, uh, e, ht in zip(t, spectra, errs, hts):
        u = grid.inverse(uh)
        dk = grid.freq_l2(-grid.xi2 * uh + ht)
        snaps.append(SolutionSnapshot(
            float(ti), GridField(grid, u), grid.freq_l2(uh), grid.freq_h2(uh),
            float(np.max(np.abs(u))), dk, grid.freq_l2(e),
            {"spectral_tolerance": spectral_tolerance(grid, uh, e)}))
    return snaps


def _sharper_integral(kernel, n, t):
    """int_0^t ||k||_{L1(0,s)}**(n/4) / (s**(1+n/4) k(s)) ds."""
    def g(s):
        return k_l1_norm(kernel, s) ** (n / 4.0) / (s ** (1.0 + n / 4.0) * eval_k(kernel, s))

    a = kernel.alpha_max
    # integrand ~ s**(a - 1 - n a / 4) near 0; s = t u**p makes it smooth in u
    p = 1.0 / (a - n * a / 4.0)

    def smooth(u):
        return g(t * u**p) * t * p * u ** (p - 1.0)

    val, _ = integrate.quad(smooth, 0.0, 1.0, epsrel=1e-10, limit=200)
    return float(val)


def resolvent_primitive(kernel: Kernel, t: float) -> tuple[float, float]:
    """int_0^t l(s) ds with l the inverse transform of 1/(s k^(s)).

    This is sup over lam of (1 - Y(t, lam)) / lam, reached as lam -> 0, and
    the sharp constant in ||u(t)||_L2 <= C(t) ||h||_{Linf L2}.  For the power
    law it equals t**alpha / Gamma(1 + alpha).  Returns (value, error).
    """
    def f(s):
        return 1.0 / (s * s * laplace_k_unchecked(kernel, s))

    res = invert(f, t)
    return res.value, res.error_estimate


def verify_source_estimates(kernel: Kernel, h: Callable, grid: BoxGrid, times,
                            q: np.ndarray | None = None, n_steps: int = 256,
                            n_envelope: int = 64) -> VerificationReport:
    """Check the source-problem estimates at each requested time.

    ``q`` is a frequency-side envelope with |h~(s, xi)| <= q(xi); by default the
    pointwise maximum of |h~| over ``n_envelope`` sampled times in
    [0, max(times)].  ||h||_{Linf L2} is taken over the same samples.
    """
    t = _times(times)
    n = grid.n
    samples = np.linspace(0.0, float(t.max()), n_envelope)
    hs = [grid.forward(_source_values(h, grid, s)) for s in samples]
    env = np.max(np.abs(np.stack(hs)), axis=0)
    if q is None:
        q = env
    q = np.asarray(q, dtype=float)
    if q.shape != grid.shape:
        raise ShapeError("envelope q must live on the frequency grid")
    q_l2 = grid.freq_l2(q)
    q_sup = float(np.max(q))
    h_inf = max(grid.freq_l2(x) for x in hs)
    spectra, errs, hts = _source_spectra(kernel, h, grid, t, int(n_steps))
    lam, inv = grid.shells
    Y_all, eY_all = None, None
    nonneg = all(np.all(_source_values(h, grid, s) >= 0) for s in samples)
    checks: list[Check] = []
    env_excess = float(np.max(env - q))
    checks.append(upper_bound_check("envelope-dominates-source", "source envelope hypothesis",
                                    env_excess, 0.0, 1e-12 * q_sup))
    for ti, uh, e, ht in zip(t, spectra, errs, hts):
        tag = f"[t={ti:.6g}]"
        I = inverse_tk_integral(kernel, ti)
        l2, h2 = grid.freq_l2(uh), grid.freq_h2(uh)
        e2, eh2 = grid.freq_l2(e), grid.freq_h2(e)
        dk = grid.freq_l2(-grid.xi2 * uh + ht)
        edk = grid.freq_l2(grid.xi2 * e)
        tol = TOL_FACTOR
        checks += [
            upper_bound_check("source-l2" + tag, "L2 bound via int 1/(s k(s))",
                              l2, q_l2 * I, tol * e2),
            upper_bound_check("source-h2" + tag, "H2 bound via int 1/(s k(s))",
                              h2, q_l2 * (1.0 + I), tol * eh2),
            upper_bound_check("source-dk" + tag, "D_k bound 2 ||q||",
                              dk, 2.0 * q_l2, tol * edk),
            upper_bound_check("source-l2-linear" + tag, "linear-growth L2 bound",
                              l2, ti * h_inf, tol * e2,
                              note="fails for small t when alpha < 1; see source-l2-resolvent"),
            upper_bound_check("source-h2-linear" + tag, "linear-growth H2 bound",
                              h2, ti * h_inf + q_l2, tol * eh2),
            upper_bound_check("source-dk-linear" + tag, "D_k bound ||h|| + ||q||",
                              dk, h_inf + q_l2, tol * edk),
        ]
        G, eG = resolvent_primitive(kernel, ti)
        checks += [
            upper_bound_check("source-l2-resolvent" + tag,
                              "L2 growth bound via int_0^t l, l = L^-1[1/(s k^)]",
                              l2, G * h_inf, tol * (e2 + eG * h_inf),
                              note="sharp replacement for the linear-growth bound"),
            upper_bound_check("source-h2-resolvent" + tag,
                              "H2 growth bound via int_0^t l plus ||q||",
                              h2, G * h_inf + q_l2, tol * (eh2 + eG * h_inf)),
        ]
        S = _sharper_integral(kernel, n, ti)
        checks.append(upper_bound_check(
            "source-l2-sharper" + tag, "sharper L2 bound with K_n and ||q||_L2",
            l2, K_n(n) * q_l2 * S, tol * e2,
            note="bound as stated; it mixes ||q||_L2 with an L2 bound on Y"))
        checks.append(upper_bound_check(
            "source-l2-sharper-sup" + tag, "sharper L2 bound with K_n and sup q",
            l2, K_n(n) * q_sup * S, tol * e2,
            note="variant with sup q, which follows from |u~| <= q int Y/(s k)"))
        eps = spectral_tolerance(grid, uh, e)
        if nonneg:
            u = grid.inverse(uh)
            checks.append(upper_bound_check(
                "source-nonnegative" + tag, "nonnegative source gives nonnegative solution",
                max(0.0, -float(u.min())), 0.0, 10.0 * eps,
                note="measured is the negative part; tolerance 10 x spectral epsilon"))
    meta = {"kernel": kernel.describe(), "grid": {"n": grid.n, "L": grid.L, "M": grid.M},
            "q_l2": q_l2, "h_linf_l2": h_inf}
    return VerificationReport(tuple(checks), meta)


# ---------------------------------------------------------------- positivity

def _violation(snap):
    u = np.real(snap.field.values)
    return max(0.0, -float(u.min())), float(snap.metadata["spectral_tolerance"]), \
        float(np.max(np.abs(u)))


def _positivity_checks(label, coarse, fine, M):
    checks = []
    anchor = "nonnegative data give a nonnegative solution"
    for snaps, m in ((coarse, M), (fine, 2 * M)):
        for sn in snaps:
            v, eps, _ = _violation(sn)
            checks.append(upper_bound_check(
                f"{label}-negative-part[M={m},t={sn.time:.6g}]", anchor, v, 0.0, 10.0 * eps,
                note="measured is -min u; tolerance 10 x spectral epsilon"))
    for a, b in zip(coarse, fine):
        va, _, _ = _violation(a)
        vb, _, sup = _violation(b)
        checks.append(upper_bound_check(
            f"{label}-negative-part-refinement[t={a.time:.6g}]",
            "negative part shrinks under M -> 2M", vb, va, 16.0 * np.finfo(float).eps * sup,
            note=f"measured at M={2 * M}, bound at M={M}"))
    return checks


def verify_positivity(kernel: Kernel, n: int = 1, L: float = 20.0,
                      M: int = 128, sigma: float = 0.2, times=(0.01, 0.1, 1.0),
                      M_source: int = 64, sigma_source: float = 0.3,
                      source_times=(0.1, 1.0), n_steps: int = 256) -> VerificationReport:
    """Negative part of u against 10 x spectral epsilon, at M and 2M.

    The initial-value problem uses a Gaussian of width ``sigma`` and the
    source problem a time-independent Gaussian source of width
    ``sigma_source`` with zero data.  Narrow widths put visible mass near
    the resolution limit, so the refinement has something to remove.
    """
    t = _times(times)
    ts = _times(source_times)
    hom = [solve_homogeneous(kernel, gaussian(BoxGrid(n, L, m), sigma), t)
           for m in (M, 2 * M)]
    src = []
    for m in (M_source, 2 * M_source):
        g = BoxGrid(n, L, m)
        h = gaussian(g, sigma_source).values
        src.append(solve_with_source(kernel, lambda s, h=h: h, g, ts, n_steps))
    checks = _positivity_checks("initial", hom[0], hom[1], M) + \
        _positivity_checks("source", src[0], src[1], M_source)
    meta = {"kernel": kernel.describe(), "n": n, "L": L, "M": M, "sigma": sigma,
            "M_source": M_source, "sigma_source": sigma_source}
    return VerificationReport(tuple(checks), meta)


# ---------------------------------------------------------------- decay

@dataclass(frozen=True)
class DecayFit:
    slope: float
    expected: float | None
    times: np.ndarray
    norms: np.ndarray
    residual: float

    @property
    def relative_deviation(self) -> float | None:
        if self.expected is None:
            return None
        return abs(self.slope - self.expected) / abs(self.expected)


def decay_exponent_fit(kernel: Kernel, u0: GridField, t_window=(10.0, 1e3),
                       n_times: int = 9) -> DecayFit:
    """Least-squares slope of log ||u(t)||_L2 against log t.

    For the power law the expected slope is -n alpha / 4.
    """
    t0, t1 = float(t_window[0]), float(t_window[1])
    if not (0 < t0 < t1) or math.log10(t1 / t0) < 2.0 - 1e-12:
        raise DomainError("the fit window must span at least two decades")
    if n_times < 3:
        raise DomainError("need at least three times for a fit")
    u0 = _space_field(u0)
    grid = u0.grid
    t = np.geomspace(t0, t1, n_times)
    uh0, lam, inv, Y, _ = _homogeneous_spectra(kernel, u0, t)
    norms = np.array([grid.freq_l2(uh0 * Y[i][inv]) for i in range(t.size)])
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    expected = -grid.n * kernel.alpha / 4.0 if isinstance(kernel, PowerLaw) else None
    resid = float(np.sqrt(res[0] / t.size)) if res.size else 0.0
    return DecayFit(float(coef[0]), expected, t, norms, resid)
