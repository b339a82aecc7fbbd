import math

import numpy as np
import pytest

from gfrac.errors import DomainError, InversionError
from gfrac.laplace_inversion import (FIXED_TALBOT, GAVER_STEHFEST, invert,
                                     invert_cross_checked, stehfest_coefficients,
                                     talbot_nodes)
from gfrac.mittag_leffler import ml_relaxation

T_GRID = np.geomspace(1e-2, 1e2, 9)
# Stehfest with N = 16 reaches 1e-6 relative on e^{-a t} only while a t stays near 1
GOLDEN = {
    "one": (lambda s: 1 / s, lambda t: 1.0),
    "exp": (lambda s: 1 / (s + 0.01), lambda t: math.exp(-0.01 * t)),
    "ramp": (lambda s: 1 / s**2, lambda t: t),
    "ml": (lambda s: s**-0.5 / (s**0.5 + 1.0), lambda t: float(ml_relaxation(0.5, 1.0, t))),
}


def test_constant():
    assert invert(lambda s: 1 / s, 3.7).value == pytest.approx(1.0, abs=1e-10)


def test_exponential_pair():
    assert invert(lambda s: 1 / (s + 2), 1.0).value == pytest.approx(math.exp(-2), rel=1e-9)


def test_half_order_relaxation_transform():
    r = invert(lambda s: s**-0.5 / (s**0.5 + 1), 1.0)
    assert r.value == pytest.approx(0.4275836, abs=5e-8)


def test_cross_checked_constant():
    r = invert_cross_checked(lambda s: 1 / s, 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-10)
    assert r.error_estimate < 1e-10 or r.method == FIXED_TALBOT
    assert abs(r.value - 1.0) < 1e-10


def test_cross_checked_sine():
    r = invert_cross_checked(lambda s: 1 / (s * s + 1), math.pi / 2)
    assert r.value == pytest.approx(1.0, abs=1e-8)


def test_cross_checked_relaxation_at_t10():
    r = invert_cross_checked(lambda s: s**-0.5 / (s**0.5 + 1), 10.0)
    assert r.value == pytest.approx(float(ml_relaxation(0.5, 1.0, 10.0)), abs=1e-6)
    assert not r.flagged


@pytest.mark.parametrize("name", sorted(GOLDEN))
@pytest.mark.parametrize("method", [FIXED_TALBOT, GAVER_STEHFEST])
def test_golden_set(name, method):
    f, exact = GOLDEN[name]
    for t in T_GRID:
        assert invert(f, t, method).value == pytest.approx(exact(t), rel=1e-6)


@pytest.mark.parametrize("name", sorted(GOLDEN))
@pytest.mark.parametrize("M", [16, 24, 32])
def test_talbot_refinement_within_estimate(name, M):
    f, _ = GOLDEN[name]
    for t in T_GRID:
        lo = invert(f, t, M=M)
        hi = invert(f, t, M=2 * M)
        # at 2M the contour sum carries more roundoff, which the estimate includes
        assert abs(hi.value - lo.value) <= max(lo.error_estimate, hi.error_estimate)


def test_error_estimate_bounds_actual_error():
    for name, (f, exact) in GOLDEN.items():
        for t in T_GRID:
            r = invert(f, t)
            assert abs(r.value - exact(t)) <= r.error_estimate + 1e-14, (name, t)


def test_cross_check_flags_disagreement():
    # oscillatory transforms defeat Stehfest, not Talbot
    r = invert_cross_checked(lambda s: 1 / (s * s + 1), 5.0)
    assert r.flagged
    assert r.value == pytest.approx(math.sin(5.0), abs=1e-8)


@pytest.mark.parametrize("t", [0.0, -1.0, math.inf, math.nan])
def test_rejects_bad_time(t):
    with pytest.raises(DomainError):
        invert(lambda s: 1 / s, t)


def test_rejects_unknown_method():
    with pytest.raises(DomainError):
        invert(lambda s: 1 / s, 1.0, method="Euler")


def test_non_finite_transform_raises():
    with pytest.raises(InversionError):
        invert(lambda s: np.full_like(s, np.nan), 1.0)


def test_stehfest_coefficients_sum_to_zero():
    v = stehfest_coefficients(16)
    assert abs(v.sum()) < 1e-6 * np.abs(v).max()


def test_scalar_only_transform_is_supported():
    r = invert(lambda s: 1 / complex(s + 1) if np.isscalar(s) else 1 / (s + 1), 1.0)
    assert r.value == pytest.approx(math.exp(-1), rel=1e-9)


def test_nodes_shape():
    s, w = talbot_nodes([0.5, 1.0, 2.0], 20)
    assert s.shape == w.shape == (3, 20)
