import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfrac.errors import DomainError, ShapeError
from gfrac.gode import (TimeGrid, apply_dk, constant_forcing_check, convolution_weights,
                        cross_oracle_check, repr_with_error, solve_inhomogeneous_repr,
                        solve_inhomogeneous_stepper, solve_relax_ode, stepper_with_error,
                        verify_cross_oracle)
from gfrac.kernels import PowerLaw
from gfrac.mittag_leffler import ml_relaxation
from gfrac.relaxation import relax

GRID = TimeGrid.on_interval(1.0, 256)


def test_time_grid_validation():
    with pytest.raises(DomainError):
        TimeGrid(0.0, 10)
    with pytest.raises(DomainError):
        TimeGrid(0.1, 1)
    g = TimeGrid.on_interval(2.0, 8)
    assert g.T == pytest.approx(2.0) and g.nodes.size == 9
    assert g.coarsened().N == 4


def test_weights_are_causal():
    cw = convolution_weights(PowerLaw(0.5), TimeGrid.on_interval(1.0, 16))
    W = cw.matrix()
    assert W.shape[0] == 16
    assert np.allclose(np.triu(W[:, 1:], 1), 0.0)


def test_constant_is_annihilated(reference_kernel):
    out = apply_dk(reference_kernel, GRID, np.full(GRID.N + 1, 3.7))
    np.testing.assert_allclose(out, 0.0, atol=1e-13)


def test_caputo_derivative_of_identity():
    out = apply_dk(PowerLaw(0.5), GRID, GRID.nodes)
    assert out[-1] == pytest.approx(2 / math.sqrt(math.pi), rel=1e-10)
    np.testing.assert_allclose(out, GRID.nodes[1:] ** 0.5 / math.gamma(1.5), rtol=1e-10)


def test_relaxation_satisfies_equation():
    v = np.asarray(ml_relaxation(0.5, 1.0, GRID.nodes))
    out = apply_dk(PowerLaw(0.5), GRID, v)
    # consistency error O(h**(2 - alpha)) away from the origin
    assert np.max(np.abs(out + v[1:])[GRID.N // 4:]) < 10 * GRID.h ** 1.5


def test_apply_dk_shape_mismatch():
    with pytest.raises(ShapeError):
        apply_dk(PowerLaw(0.5), GRID, np.zeros(GRID.N))


def test_zero_rate_keeps_initial_value(reference_kernel):
    np.testing.assert_allclose(solve_relax_ode(reference_kernel, 0.0, 2.5, GRID), 2.5)


def test_zero_initial_value_stays_zero(reference_kernel):
    np.testing.assert_array_equal(solve_relax_ode(reference_kernel, 3.0, 0.0, GRID), 0.0)


def test_relax_ode_matches_oracle():
    g = TimeGrid.on_interval(1.0, 1024)
    w = solve_relax_ode(PowerLaw(0.5), 1.0, 1.0, g)
    assert w[-1] == pytest.approx(0.4275836, abs=1e-5)


def test_relax_ode_decreasing_positive(reference_kernel):
    w = solve_relax_ode(reference_kernel, 2.0, 1.0, GRID)
    assert np.all(w > 0) and np.all(np.diff(w) < 0) and w[0] == 1.0


def test_refinement_reduces_error():
    errs = []
    for N in (256, 512, 1024):
        g = TimeGrid.on_interval(1.0, N)
        w = solve_relax_ode(PowerLaw(0.5), 1.0, 1.0, g)
        errs.append(np.max(np.abs(w - ml_relaxation(0.5, 1.0, g.nodes))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.0)


def test_stepper_zero_forcing_is_relax_ode():
    a = solve_inhomogeneous_stepper(PowerLaw(0.5), 1.0, None, 1.0, GRID)
    b = solve_relax_ode(PowerLaw(0.5), 1.0, 1.0, GRID)
    np.testing.assert_array_equal(a, b)


def test_stepper_unit_forcing_zero_rate():
    g = TimeGrid.on_interval(1.0, 1024)
    w = solve_inhomogeneous_stepper(PowerLaw(0.5), 0.0, lambda t: np.ones_like(t), 0.0, g)
    assert w[-1] == pytest.approx(1 / math.gamma(1.5), rel=1e-8)


def test_stepper_superposition():
    f = np.sin
    full = solve_inhomogeneous_stepper(PowerLaw(0.5), 2.0, f, 0.7, GRID)
    parts = solve_relax_ode(PowerLaw(0.5), 2.0, 0.7, GRID) + \
        solve_inhomogeneous_stepper(PowerLaw(0.5), 2.0, f, 0.0, GRID)
    np.testing.assert_allclose(full, parts, atol=1e-13)


def test_stepper_vectorised_over_lambda():
    lams = np.array([0.5, 2.0])
    both = solve_inhomogeneous_stepper(PowerLaw(0.5), lams, np.cos, 0.0, GRID)
    assert both.shape == (GRID.N + 1, 2)
    for i, lam in enumerate(lams):
        np.testing.assert_allclose(
            both[:, i], solve_inhomogeneous_stepper(PowerLaw(0.5), lam, np.cos, 0.0, GRID),
            atol=1e-14)


def test_repr_zero_forcing():
    np.testing.assert_array_equal(
        solve_inhomogeneous_repr(PowerLaw(0.5), 1.0, lambda t: 0 * t, GRID), 0.0)


def test_repr_constant_forcing():
    w = solve_inhomogeneous_repr(PowerLaw(0.5), 1.0, lambda t: np.ones_like(t), GRID)
    assert w[0] == 0.0
    assert w[-1] == pytest.approx(1 - 0.4275836, abs=5e-7)


@pytest.mark.parametrize("lam", [0.0, -1.0, math.nan])
def test_repr_requires_positive_rate(lam):
    with pytest.raises(DomainError):
        solve_inhomogeneous_repr(PowerLaw(0.5), lam, np.sin, GRID)


def test_repr_accepts_node_samples():
    a = solve_inhomogeneous_repr(PowerLaw(0.5), 2.0, np.sin, GRID)
    b = solve_inhomogeneous_repr(PowerLaw(0.5), 2.0, np.sin(GRID.nodes), GRID)
    np.testing.assert_allclose(a, b, atol=1e-7)
    with pytest.raises(ShapeError):
        solve_inhomogeneous_repr(PowerLaw(0.5), 2.0, np.zeros(3), GRID)


def test_sine_forcing_two_solvers_agree():
    g = TimeGrid.on_interval(2.0, 1024)
    check = cross_oracle_check(PowerLaw(0.5), 2.0, np.sin, g, "sine")
    assert check.passed, check


def test_error_estimates_nonnegative():
    _, e1 = repr_with_error(PowerLaw(0.5), 2.0, np.sin, GRID)
    _, e2 = stepper_with_error(PowerLaw(0.5), 2.0, np.sin, 0.0, GRID)
    assert np.all(e1 >= 0) and np.all(e2 >= 0)


@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=4), st.floats(0.1, 10.0))
def test_nonnegative_forcing_gives_nonnegative_solution(coefs, lam):
    # polynomials with nonnegative coefficients are nonnegative on [0, T]
    f = lambda t: np.polyval(coefs, t)  # noqa: E731
    # the plain L1 rule has positive resolvent weights
    w = solve_inhomogeneous_stepper(PowerLaw(0.5), lam, f, 0.0, GRID, sigmas=())
    assert np.all(w >= 0)
    # starting corrections may dip below zero by less than the discretisation error
    w, e = stepper_with_error(PowerLaw(0.5), lam, f, 0.0, GRID)
    assert np.all(w >= -10 * e)


@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=4), st.sampled_from([0.5, 2.0, 10.0]))
def test_uniform_bound(coefs, lam):
    f = lambda t: np.polyval(coefs, t)  # noqa: E731
    w, e = repr_with_error(PowerLaw(0.5), lam, f, GRID)
    fmax = np.maximum.accumulate(np.abs(f(GRID.nodes)))
    v = np.array([1.0] + [relax(PowerLaw(0.5), lam, t) for t in GRID.nodes[1::32]])
    idx = np.r_[0, np.arange(1, GRID.N + 1, 32)]
    bound = fmax[idx] * (1 - v) / lam
    assert np.all(np.abs(w[idx]) <= bound + 10 * e[idx] + 1e-12)


def test_constant_forcing_identity(reference_kernel):
    g = TimeGrid.on_interval(2.0, 256)
    for lam in (0.5, 10.0):
        assert constant_forcing_check(reference_kernel, lam, 1.3, g, "c").passed


def test_verify_cross_oracle_small():
    report = verify_cross_oracle(PowerLaw(0.5), lams=(2.0,), n_forcings=2,
                                 grid=TimeGrid.on_interval(2.0, 256))
    assert report.passed
    assert len(report.by_name("cross-oracle-cubic")) == 2
    assert len(report.by_name("constant-forcing")) == 1
