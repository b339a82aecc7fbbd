"""Scalar equations D_k w + lam w = f on a uniform grid.

Two independent solvers are provided so that each can serve as the other's
oracle:

* a convolution-quadrature stepper: product integration of the kernel
  against the piecewise-linear interpolant of w (the L1 scheme for the power
  law), with starting corrections for the non-smooth terms t**sigma of the
  solution so that the global error is O(h**(2 - a_max));
* the representation w(t) = -(1/lam) int_0^t v'(t - s) f(s) ds with
  v = Y(., lam), evaluated by graded Gauss quadrature and Talbot values of v'.

All kernels here are power sums, so the operator can be written
D_k v(t) = int_0^t k(t - s) v'(s) ds and the cell integrals of k are the
closed-form primitive ``k_l1_norm``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve
from scipy.special import gamma

from . import _backend
from .errors import DomainError, ShapeError
from .kernels import Kernel, k_l1_norm
from .relaxation import TOL_FACTOR, relax_derivative_many, relax_many
from .report import VerificationReport, upper_bound_check

__all__ = [
    "TimeGrid",
    "ConvolutionWeights",
    "convolution_weights",
    "correction_exponents",
    "apply_dk",
    "solve_relax_ode",
    "solve_inhomogeneous_stepper",
    "solve_inhomogeneous_repr",
    "stepper_with_error",
    "repr_with_error",
    "representation_weights",
    "RepresentationWeights",
    "cross_oracle_check",
    "constant_forcing_check",
    "verify_cross_oracle",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n h, n = 0..N."""

    h: float
    N: int

    def __post_init__(self):
        if not (self.h > 0) or not math.isfinite(self.h):
            raise DomainError("step must be positive")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError("grid needs N >= 2 steps")
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def on_interval(cls, T: float, N: int) -> "TimeGrid":
        return cls(float(T) / N, N)

    @property
    def T(self) -> float:
        return self.h * self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.N + 1)

    def coarsened(self) -> "TimeGrid":
        if self.N % 2 or self.N < 4:
            raise DomainError("coarsening needs an even N >= 4")
        return TimeGrid(2.0 * self.h, self.N // 2)


def correction_exponents(kernel: Kernel, max_terms: int = 4, min_gap: float = 0.05):
    """Exponents sigma of the leading non-smooth terms t**sigma of the solution.

    Products j * a_max + m in (0, 1] are taken in increasing order, dropping
    any value closer than ``min_gap`` to one already chosen (nearly equal
    exponents make the starting system ill-conditioned).
    """
    a = kernel.alpha_max
    cands = sorted({round(j * a + m, 12) for j in range(1, 40) for m in range(0, 2)
                    if 0.0 < j * a + m <= 1.0 + 1e-12})
    cands.append(1.0)
    chosen: list[float] = []
    for c in sorted(set(cands)):
        if all(abs(c - x) >= min_gap for x in chosen):
            chosen.append(c)
        if len(chosen) == max_terms:
            break
    return tuple(chosen)


def _exact_dk_power(kernel, sigma, t):
    """D_k t**sigma = sum_i c_i Gamma(sigma+1)/Gamma(sigma+1-a_i) t**(sigma-a_i)."""
    out = np.zeros_like(t)
    for c, a in zip(kernel.coefficients, kernel.exponents):
        out += c * gamma(sigma + 1.0) / gamma(sigma + 1.0 - a) * t ** (sigma - a)
    return out


def _l1_apply(a, v):
    """sum_{j=1}^n a[n-j] (v_j - v_{j-1}) for n = 1..N (trailing axis 0)."""
    dv = np.diff(v, axis=0)
    n = dv.shape[0]
    if dv.ndim == 1:
        return fftconvolve(a[:n], dv)[:n]
    return fftconvolve(a[:n, None], dv, axes=0)[:n]


@dataclass(frozen=True)
class ConvolutionWeights:
    """Discrete D_k on a grid.

    (D_k v)(t_n) ~ sum_{j=1}^n a[n-j] (v_j - v_{j-1})
                   + sum_{m=1}^S C[m-1, n-1] (v_m - v_0)

    ``a`` are the cell integrals of k divided by h; ``C`` are starting
    corrections that make the rule exact on t**sigma for every correction
    exponent sigma.
    """

    kernel: Kernel
    grid: TimeGrid
    a: np.ndarray
    sigmas: tuple
    C: np.ndarray

    def matrix(self) -> np.ndarray:
        """Dense lower-triangular W with (D_k v)_n = sum_j W[n-1, j-1] (v_j - v_0)."""
        N = self.grid.N
        # sum_j a[n-j](v_j - v_{j-1}) = a[0](v_n - v_0)
        #     + sum_{j<n} (a[n-j] - a[n-j-1]) (v_j - v_0)
        d = np.diff(self.a[:N])
        W = np.zeros((N, N))
        for n in range(1, N + 1):
            W[n - 1, n - 1] = self.a[0]
            W[n - 1, :n - 1] = d[:n - 1][::-1]
        S = len(self.sigmas)
        W[:, :S] += self.C.T
        return W


@lru_cache(maxsize=64)
def _weights_cached(kernel, h, N, sigmas):
    m = np.arange(N + 1)
    a = (k_l1_norm(kernel, (m + 1) * h) - k_l1_norm(kernel, m * h)) / h
    S = len(sigmas)
    if S == 0:
        return a, np.zeros((0, N))
    t = h * m
    R = np.array([_exact_dk_power(kernel, s, t[1:]) - _l1_apply(a, t**s) for s in sigmas])
    V = np.array([[t[k] ** s for k in range(1, S + 1)] for s in sigmas])
    C = np.linalg.solve(V, R)
    a.setflags(write=False)
    C.setflags(write=False)
    return a, C


def convolution_weights(kernel: Kernel, grid: TimeGrid, sigmas=None) -> ConvolutionWeights:
    """Build (and cache) the weights; ``sigmas=()`` gives the plain product rule."""
    if sigmas is None:
        sigmas = correction_exponents(kernel)
    sigmas = tuple(float(s) for s in sigmas)
    if len(sigmas) >= grid.N:
        raise DomainError("more correction terms than grid steps")
    a, C = _weights_cached(kernel, grid.h, grid.N, sigmas)
    return ConvolutionWeights(kernel, grid, a, sigmas, C)


def apply_dk(kernel: Kernel, grid: TimeGrid, samples, sigmas=None) -> np.ndarray:
    """Discrete D_k v at nodes 1..N from samples at nodes 0..N."""
    v = np.asarray(samples, dtype=float)
    if v.shape[0] != grid.N + 1:
        raise ShapeError(f"expected {grid.N + 1} samples, got {v.shape[0]}")
    cw = convolution_weights(kernel, grid, sigmas)
    out = _l1_apply(cw.a, v)
    S = len(cw.sigmas)
    if S:
        dv = v[1:S + 1] - v[0]
        out = out + (cw.C.T @ dv)
    return out


def _forcing_at(f, t):
    if f is None:
        return np.zeros_like(t)
    if callable(f):
        return np.broadcast_to(np.asarray(f(t), dtype=float), t.shape).copy()
    arr = np.asarray(f, dtype=float)
    if arr.shape != t.shape:
        raise ShapeError(f"forcing samples must have shape {t.shape}, got {arr.shape}")
    return arr.copy()


def _march(cw: ConvolutionWeights, lam, fvals, w0):
    """Solve columns b of D_k w + lam_b w = f_b with w(0) = w0_b."""
    N = cw.grid.N
    a, C = cw.a, cw.C
    S = len(cw.sigmas)
    B = lam.size
    w = np.zeros((N + 1, B))
    w[0] = w0
    # first S steps jointly; equation n uses w_1..w_S through the corrections
    if S:
        for b in range(B):
            Mx = np.zeros((S, S))
            rhs = np.zeros(S)
            for n in range(1, S + 1):
                for j in range(1, n + 1):
                    Mx[n - 1, j - 1] += a[n - j]
                    if j >= 2:
                        Mx[n - 1, j - 2] -= a[n - j]
                    else:
                        rhs[n - 1] += a[n - j] * w0[b]
                Mx[n - 1, :] += C[:, n - 1]
                rhs[n - 1] += C[:, n - 1].sum() * w0[b]
                Mx[n - 1, n - 1] += lam[b]
                rhs[n - 1] += fvals[n, b]
            w[1:S + 1, b] = np.linalg.solve(Mx, rhs)
        corr = C.T @ (w[1:S + 1] - w[0])
    else:
        corr = np.zeros((N, B))
    rhs = np.zeros((N + 1, B))
    rhs[1:] = fvals[1:] - corr
    return _backend.l1_march(np.ascontiguousarray(a), np.ascontiguousarray(lam), rhs, w, S)


def _stepper(kernel, lam, f, w0, grid, sigmas):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(~(lam >= 0)) or np.any(~np.isfinite(lam)):
        raise DomainError("lambda must be non-negative")
    t = grid.nodes
    fv = _forcing_at(f, t)
    if fv.ndim == 1:
        fv = np.repeat(fv[:, None], lam.size, axis=1)
    if fv.shape[1] != lam.size:
        raise ShapeError("one forcing column per lambda is required")
    w0 = np.broadcast_to(np.asarray(w0, dtype=float), (lam.size,)).copy()
    cw = convolution_weights(kernel, grid, sigmas)
    return _march(cw, lam, fv, w0)


def solve_inhomogeneous_stepper(kernel: Kernel, lam, f, w0, grid: TimeGrid,
                                sigmas=None) -> np.ndarray:
    """Implicit stepping for D_k w + lam w = f, w(0) = w0.

    ``f`` is a vectorised callable, an array of node values, or None.  When
    ``lam`` is an array the problem is solved column-wise and a 2-D array
    ``(N+1, len(lam))`` is returned.
    """
    out = _stepper(kernel, lam, f, w0, grid, sigmas)
    return out[:, 0] if np.ndim(lam) == 0 else out


def solve_relax_ode(kernel: Kernel, lam: float, w0: float, grid: TimeGrid,
                    sigmas=None) -> np.ndarray:
    """D_k w + lam w = 0, w(0) = w0, on the grid nodes."""
    return solve_inhomogeneous_stepper(kernel, lam, None, w0, grid, sigmas)


def stepper_with_error(kernel: Kernel, lam: float, f, w0: float, grid: TimeGrid,
                       sigmas=None):
    """Stepper solution and a Richardson-type error estimate.

    The estimate at t_n is max_{t_m <= t_n} |w_h - w_2h| over shared nodes
    (valid for observed order >= 1).  The running maximum is used because the
    pointwise difference changes sign where the fine and coarse error
    curves cross, while errors of a Volterra problem are inherited from the
    whole history.
    """
    fine = solve_inhomogeneous_stepper(kernel, lam, f, w0, grid, sigmas)
    coarse_grid = grid.coarsened()
    fc = f
    if f is not None and not callable(f):
        fc = np.asarray(f, dtype=float)[::2]
    coarse = solve_inhomogeneous_stepper(kernel, lam, fc, w0, coarse_grid, sigmas)
    d = np.maximum.accumulate(np.abs(fine[::2] - coarse), axis=0)
    err = np.empty_like(fine)
    err[::2] = d
    err[1::2] = np.maximum(d[:-1], d[1:])
    return fine, err


# ---------------------------------------------------------------- representation

_GAUSS_HI = np.polynomial.legendre.leggauss(8)
_GAUSS_LO = np.polynomial.legendre.leggauss(5)


def _u_panels(n_panels=18, ratio=0.5):
    edges = np.concatenate([[0.0], ratio ** np.arange(n_panels - 1, -1, -1)])
    return edges


def _u_rule(rule, edges):
    x, w = rule
    lo, hi = edges[:-1, None], edges[1:, None]
    u = 0.5 * (hi - lo) * (x[None, :] + 1.0) + lo
    wu = 0.5 * (hi - lo) * w[None, :]
    return u.ravel(), wu.ravel()


@dataclass(frozen=True)
class RepresentationWeights:
    """Quadrature for w(t) = A f(t) + sum_q W[q] (f(t - r_q) - f(t)).

    Arrays are indexed ``[time, node]`` for ``r`` and ``[time, node, lam]``
    for ``W``; ``A[time, lam] = (1 - Y(t, lam)) / lam``.
    """

    t: np.ndarray
    lam: np.ndarray
    r: np.ndarray
    W: np.ndarray
    A: np.ndarray
    r_lo: np.ndarray
    W_lo: np.ndarray
    W_err: np.ndarray
    A_err: np.ndarray


def _rule_weights(kernel, lam, t, rule, p):
    u, wu = _u_rule(rule, _u_panels())
    # r = t u**p, dr = t p u**(p-1) du
    r = t[:, None] * u[None, :] ** p
    jac = t[:, None] * p * u[None, :] ** (p - 1.0) * wu[None, :]
    dv, dv_err = relax_derivative_many(kernel, lam, r.ravel(), 1)
    shape = r.shape + (lam.size,)
    W = -(jac[:, :, None] * dv.reshape(shape)) / lam[None, None, :]
    We = (jac[:, :, None] * dv_err.reshape(shape)) / lam[None, None, :]
    return r, W, We


def representation_weights(kernel: Kernel, lam, t) -> RepresentationWeights:
    """Graded quadrature weights for the representation at times ``t``.

    The substitution r = t u**(1/a_max) removes the r**(a_max - 1)
    singularity of v'(r) at the upper endpoint s -> t of the original
    integral; geometric Gauss panels in u resolve the remaining power terms.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~(lam > 0)) or np.any(~np.isfinite(lam)):
        raise DomainError("the representation needs lambda > 0")
    if np.any(~(t > 0)):
        raise DomainError("representation times must be positive")
    p = 1.0 / kernel.alpha_max
    r, W, We = _rule_weights(kernel, lam, t, _GAUSS_HI, p)
    r_lo, W_lo, _ = _rule_weights(kernel, lam, t, _GAUSS_LO, p)
    Y, eY = relax_many(kernel, lam, t)
    A = (1.0 - Y) / lam[None, :]
    return RepresentationWeights(t, lam, r, W, A, r_lo, W_lo, We, eY / lam[None, :])


def _apply_repr(rw: RepresentationWeights, f):
    """Evaluate both rules for a scalar-valued vectorised ``f``; shape (T, J)."""
    ft = np.asarray(f(rw.t), dtype=float)
    hi = rw.A * ft[:, None] + np.einsum(
        "tq,tqj->tj", f(rw.t[:, None] - rw.r) - ft[:, None], rw.W)
    lo = rw.A * ft[:, None] + np.einsum(
        "tq,tqj->tj", f(rw.t[:, None] - rw.r_lo) - ft[:, None], rw.W_lo)
    inv = rw.A_err * np.abs(ft[:, None]) + np.einsum(
        "tq,tqj->tj", np.abs(f(rw.t[:, None] - rw.r) - ft[:, None]), rw.W_err)
    return hi, np.abs(hi - lo) + inv


def _as_callable(f, grid):
    if callable(f):
        return lambda x: np.broadcast_to(np.asarray(f(x), dtype=float), np.shape(x))
    vals = np.asarray(f, dtype=float)
    if vals.shape != (grid.N + 1,):
        raise ShapeError(f"forcing samples must have shape {(grid.N + 1,)}")
    return CubicSpline(grid.nodes, vals)


def repr_with_error(kernel: Kernel, lam: float, f, grid: TimeGrid):
    """Representation solution at the grid nodes with an error estimate.

    The estimate is the spread between 8- and 5-point Gauss panels plus the
    propagated Talbot error of v' and Y.
    """
    lam = float(lam)
    if not (lam > 0.0) or not math.isfinite(lam):
        raise DomainError("the representation divides by lambda; need lambda > 0")
    fc = _as_callable(f, grid)
    t = grid.nodes
    rw = _repr_cached(kernel, lam, grid.h, grid.N)
    val, err = _apply_repr(rw, fc)
    w = np.concatenate([[0.0], val[:, 0]])
    e = np.concatenate([[0.0], err[:, 0]])
    assert w.shape == t.shape
    return w, e


@lru_cache(maxsize=16)
def _repr_cached(kernel, lam, h, N):
    return representation_weights(kernel, [lam], h * np.arange(1, N + 1))


def solve_inhomogeneous_repr(kernel: Kernel, lam: float, f: Callable | np.ndarray,
                             grid: TimeGrid) -> np.ndarray:
    """w(t) = -(1/lam) int_0^t v'(t - s) f(s) ds at the grid nodes (w(0) = 0)."""
    return repr_with_error(kernel, lam, f, grid)[0]


# ---------------------------------------------------------------- checks

def cross_oracle_check(kernel: Kernel, lam: float, f, grid: TimeGrid, name: str,
                       atol: float = 0.0):
    """Sup-norm agreement of the representation and the stepper.

    Passes when the discrepancy is within ``atol`` plus 10x the sum of both
    solvers' error estimates.
    """
    w_r, e_r = repr_with_error(kernel, lam, f, grid)
    w_s, e_s = stepper_with_error(kernel, lam, f, 0.0, grid)
    diff = float(np.max(np.abs(w_r - w_s)))
    tol = atol + TOL_FACTOR * float(np.max(e_r + e_s))
    return upper_bound_check(name, "representation vs stepper", diff, 0.0, tol,
                             note=f"sup |w_repr - w_step| on [0, {grid.T:g}]")


def constant_forcing_check(kernel: Kernel, lam: float, c: float, grid: TimeGrid,
                           name: str, atol: float = 1e-4):
    """The representation of f = c against c (1 - Y) / lam.

    The representation is evaluated as the plain quadrature
    -(c / lam) int_0^t v'(r) dr with Talbot values of v', without the split
    through A = (1 - Y) / lam that would make the identity hold by
    construction; Y comes from a separate inversion.
    """
    t = grid.nodes[1:]
    rw = _repr_cached(kernel, float(lam), grid.h, grid.N)
    w = c * rw.W[:, :, 0].sum(axis=1)
    Y, _ = relax_many(kernel, [lam], t)
    ref = c * (1.0 - Y[:, 0]) / lam
    diff = float(np.max(np.abs(w - ref)))
    return upper_bound_check(name, "constant forcing identity w = c(1 - Y)/lam",
                             diff, 0.0, atol, note="sup over the grid")


def verify_cross_oracle(kernel: Kernel, lams=(0.5, 2.0, 10.0), n_forcings: int = 3,
                        grid: TimeGrid | None = None, seed: int = 0,
                        atol: float = 1e-3) -> VerificationReport:
    """Random cubic forcings plus the constant-forcing identity for each lam."""
    if grid is None:
        grid = TimeGrid.on_interval(2.0, 1024)
    rng = np.random.default_rng(seed)
    checks = []
    for lam in lams:
        for i in range(int(n_forcings)):
            c = rng.uniform(-1.0, 1.0, 4)
            checks.append(cross_oracle_check(
                kernel, lam, lambda x, c=c: np.polyval(c[::-1], x), grid,
                f"cross-oracle-cubic{i}[lam={lam:g}]", atol))
        checks.append(constant_forcing_check(kernel, lam, 1.0, grid,
                                             f"constant-forcing[lam={lam:g}]"))
    meta = {"kernel": kernel.describe(), "h": grid.h, "N": grid.N, "seed": int(seed)}
    return VerificationReport(tuple(checks), meta)
