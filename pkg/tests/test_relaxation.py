import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfcx

from gfrac.errors import DomainError
from gfrac.kernels import DistributedOrder, MultiTerm, PowerLaw
from gfrac.mittag_leffler import ml_relaxation
from gfrac.relaxation import (check_complete_monotonicity, check_relax_bounds, log_grid,
                              relax, relax_many, relax_result, relax_time_derivative,
                              relaxation_curve)


def test_zero_rate_is_exactly_one(reference_kernel):
    for t in (1e-3, 1.0, 1e3):
        assert relax(reference_kernel, 0.0, t) == 1.0


def test_half_order_value():
    assert relax(PowerLaw(0.5), 1.0, 1.0) == pytest.approx(0.4275836, abs=5e-8)


def test_near_one_exponent_approaches_exponential():
    y = relax(PowerLaw(0.999), 2.0, 1.0)
    assert y == pytest.approx(math.exp(-2), abs=1e-2)
    assert y == pytest.approx(float(ml_relaxation(0.999, 2.0, 1.0)), abs=1e-6)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_power_law_oracle(alpha, lam):
    t = np.geomspace(1e-2, 1e2, 17)
    y, _ = relax_many(PowerLaw(alpha), [lam], t)
    np.testing.assert_allclose(y[:, 0], ml_relaxation(alpha, lam, t), rtol=0, atol=1e-6)


def test_relax_result_reports_cross_check():
    r = relax_result(PowerLaw(0.5), 1.0, 1.0)
    assert r.error_estimate < 1e-6
    assert not r.flagged


@given(st.floats(1e-2, 1e2), st.floats(1e-2, 1e2), st.floats(1e-2, 1e2))
def test_monotone_in_lambda(t, l1, l2):
    k = MultiTerm(((1.0, 0.3), (1.0, 0.7)))
    lo, hi = sorted((l1, l2))
    y, e = relax_many(k, [lo, hi], [t])
    assert y[0, 0] >= y[0, 1] - 10 * (e[0, 0] + e[0, 1])


def test_values_in_unit_interval_and_decreasing(reference_kernel):
    t = log_grid(1e-2, 1e2, 64)
    for lam in (0.1, 1.0, 10.0):
        y, e = relax_many(reference_kernel, [lam], t)
        y = y[:, 0]
        assert np.all(y > 0) and np.all(y <= 1 + 10 * e[:, 0])
        assert np.all(np.diff(y) < 10 * (e[1:, 0] + e[:-1, 0]))


def test_small_time_limit(reference_kernel):
    assert relax(reference_kernel, 1.0, 1e-8) > 0.99


def test_derivative_zero_rate():
    assert relax_time_derivative(PowerLaw(0.5), 0.0, 1.0, 1) == 0.0


def test_derivative_half_order_closed_form():
    # Y = erfcx(sqrt t), dY/dt = erfcx(sqrt t) - 1 / sqrt(pi t)
    exact = erfcx(1.0) - 1 / math.sqrt(math.pi)
    assert exact == pytest.approx(-0.136606, abs=5e-7)
    assert relax_time_derivative(PowerLaw(0.5), 1.0, 1.0, 1) == pytest.approx(exact, abs=1e-8)
    fd = relax_time_derivative(PowerLaw(0.5), 1.0, 1.0, 1, method="fd")
    # second-order central differences with h = t/100
    assert fd == pytest.approx(exact, abs=1e-5)


def test_third_derivative_bound(reference_kernel):
    d3 = relax_time_derivative(reference_kernel, 5.0, 2.0, 3)
    assert abs(d3) <= (3 / (2 * math.e)) ** 3


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_derivative_bounds_on_grid(reference_kernel, j):
    for t in np.geomspace(1e-2, 1e2, 9):
        for lam in (0.5, 5.0):
            assert abs(relax_time_derivative(reference_kernel, lam, t, j)) <= \
                (j / (math.e * t)) ** j


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_derivative_order_must_be_positive_integer(bad):
    with pytest.raises(DomainError):
        relax_time_derivative(PowerLaw(0.5), 1.0, 1.0, bad)


@pytest.mark.parametrize("lam, t", [(-1.0, 1.0), (1.0, 0.0), (1.0, -1.0), (math.nan, 1.0)])
def test_domain_errors(lam, t):
    with pytest.raises(DomainError):
        relax(PowerLaw(0.5), lam, t)


def test_bound_b_example():
    report = check_relax_bounds(PowerLaw(0.5), 1.0, [1.0])
    (b,) = report.by_name("relax-resolvent-bound")
    assert b.bound == pytest.approx(1 / (1 + math.sqrt(math.pi) / 2), rel=1e-12)
    assert b.measured == pytest.approx(0.4275836, abs=5e-8)
    assert report.passed


def test_bounds_trivial_at_zero_rate():
    assert check_relax_bounds(PowerLaw(0.5), 0.0, log_grid(1e-2, 1e2, 16)).passed


def test_bounds_multi_term_grid():
    report = check_relax_bounds(MultiTerm(((1.0, 0.3), (1.0, 0.7))), 4.0,
                                log_grid(1e-2, 1e2, 64))
    assert report.passed
    assert len(report) == 3 * 64
    assert all(c.margin >= -c.tolerance for c in report.checks)


def test_complete_monotonicity_power_law():
    curve = relaxation_curve(PowerLaw(0.5), 1.0, log_grid(1e-2, 1e2, 64))
    report = check_complete_monotonicity(curve, 4)
    assert report.passed and len(report) >= 4


def test_complete_monotonicity_zero_rate():
    curve = relaxation_curve(PowerLaw(0.5), 0.0, log_grid(1e-2, 1e2, 64))
    assert check_complete_monotonicity(curve, 4).passed


def test_complete_monotonicity_distributed():
    curve = relaxation_curve(DistributedOrder.uniform(8), 1.0, log_grid(1e-2, 1e2, 64))
    assert check_complete_monotonicity(curve, 4).passed


def test_complete_monotonicity_needs_enough_points():
    curve = relaxation_curve(PowerLaw(0.5), 1.0, log_grid(1e-2, 1e2, 16))
    assert not check_complete_monotonicity(curve, 2).passed


def test_complete_monotonicity_detects_a_bump():
    curve = relaxation_curve(PowerLaw(0.5), 1.0, log_grid(1e-2, 1e2, 64))
    vals = curve.values.copy()
    vals[30] += 0.05
    bumped = type(curve)(curve.kernel, curve.lam, curve.t_grid, vals, curve.error_estimates)
    assert not check_complete_monotonicity(bumped, 2).passed


def test_curve_is_immutable():
    curve = relaxation_curve(PowerLaw(0.5), 1.0, log_grid(1e-2, 1e2, 8))
    with pytest.raises(ValueError):
        curve.values[0] = 0.0
