import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gfrac.errors import DomainError
from gfrac.kernels import (DistributedOrder, MultiTerm, PowerLaw, check_conditions,
                           eval_k, k_l1_norm, laplace_k, parse_kernel, sonine_conjugate)

alphas = st.floats(0.05, 0.95)


def test_eval_k_power_law_closed_form():
    assert eval_k(PowerLaw(0.5), 1.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    assert eval_k(PowerLaw(0.5), 4.0) == pytest.approx(0.5 / math.sqrt(math.pi), rel=1e-12)


def test_single_term_multi_term_matches_power_law():
    t = np.geomspace(1e-3, 1e3, 13)
    np.testing.assert_allclose(eval_k(MultiTerm(((1.0, 0.5),)), t),
                               eval_k(PowerLaw(0.5), t), rtol=1e-14)


def test_laplace_k_examples():
    assert complex(laplace_k(PowerLaw(0.5), 4.0)).real == pytest.approx(0.5, rel=1e-14)
    assert complex(laplace_k(PowerLaw(1 - 1e-9), 1.0)).real == pytest.approx(1.0, rel=1e-12)
    assert complex(laplace_k(MultiTerm(((2.0, 0.25), (3.0, 0.75))), 1.0)).real == \
        pytest.approx(5.0, rel=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0, complex(-0.5, 1.0)])
def test_laplace_k_rejects_left_half_plane(bad):
    with pytest.raises(DomainError):
        laplace_k(PowerLaw(0.5), bad)


@pytest.mark.parametrize("bad", [0.0, -2.0, math.nan])
def test_eval_k_rejects_nonpositive_time(bad):
    with pytest.raises(DomainError):
        eval_k(PowerLaw(0.5), bad)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.2, math.nan])
def test_endpoint_exponents_rejected(alpha):
    with pytest.raises(DomainError):
        PowerLaw(alpha)


def test_nonpositive_coefficients_rejected():
    with pytest.raises(DomainError):
        MultiTerm(((0.0, 0.5),))
    with pytest.raises(DomainError):
        MultiTerm(((-1.0, 0.5), (1.0, 0.3)))


def test_k_l1_norm_examples():
    k = PowerLaw(0.5)
    assert k_l1_norm(k, 1.0) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-12)
    assert k_l1_norm(k, 100.0) == pytest.approx(20 / math.sqrt(math.pi), rel=1e-12)
    assert k_l1_norm(k, 100.0) / 100.0 < k_l1_norm(k, 1.0)
    assert k_l1_norm(k, 1e-12) < 1e-5


def test_k_l1_norm_over_t_decreases_to_zero(reference_kernel):
    t = np.geomspace(1.0, 1e4, 41)
    ratio = k_l1_norm(reference_kernel, t) / t
    assert np.all(np.diff(ratio) < 0)
    assert ratio[-1] < 0.2 * ratio[0]


def test_k_l1_norm_matches_quadrature(reference_kernel):
    for t in (0.3, 2.0):
        # substitution s = t u**2 removes the s**(-a) singularity
        val, _ = integrate.quad(
            lambda u: eval_k(reference_kernel, t * u * u) * 2 * t * u, 0, 1,
            epsabs=1e-13, limit=200)
        assert k_l1_norm(reference_kernel, t) == pytest.approx(val, rel=1e-8)


def test_kernel_strictly_decreasing(reference_kernel):
    t = np.geomspace(1e-4, 1e4, 200)
    k = eval_k(reference_kernel, t)
    assert np.all(k > 0) and np.all(np.diff(k) < 0)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0, 10.0])
def test_laplace_k_matches_direct_quadrature(reference_kernel, s):
    # split at 1; substitution t = u**2 near the origin handles t**(-a)
    head, _ = integrate.quad(
        lambda u: eval_k(reference_kernel, u * u) * math.exp(-s * u * u) * 2 * u,
        0, 1, epsabs=1e-14, limit=200)
    tail, _ = integrate.quad(
        lambda t: eval_k(reference_kernel, t) * math.exp(-s * t), 1, np.inf,
        epsabs=1e-14, limit=200)
    assert complex(laplace_k(reference_kernel, s)).real == \
        pytest.approx(head + tail, rel=1e-6)


@given(alphas, st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_power_law_monotone_in_time(alpha, t1, t2):
    k = PowerLaw(alpha)
    lo, hi = sorted((t1, t2))
    if hi > lo * (1 + 1e-9):
        assert eval_k(k, lo) > eval_k(k, hi) > 0


def test_check_conditions_reference_kernels(reference_kernel):
    report = check_conditions(reference_kernel, np.geomspace(1e-3, 1e3, 121))
    assert report.passed, [c.name for c in report.failures()]


def test_check_conditions_flags_insufficient_grid():
    report = check_conditions(PowerLaw(0.5), [1.0])
    assert not report.passed
    assert "insufficient grid" in report.checks[0].note


def test_sonine_conjugate_convolution_identity(rng):
    for alpha in (0.5, 0.9):
        k = PowerLaw(alpha)
        l = sonine_conjugate(k)
        for t in [0.37] + list(rng.uniform(0.01, 10.0, 10)):
            # the algebraic weight u**(a-1) (1-u)**(-a) absorbs both endpoint singularities
            def smooth(u):
                u = min(max(u, 1e-300), 1 - 1e-16)
                return eval_k(k, t * (1 - u)) * (1 - u) ** alpha * l(t * u) * u ** (1 - alpha) * t

            val, _ = integrate.quad(smooth, 0, 1,
                weight="alg", wvar=(alpha - 1, -alpha), epsabs=1e-12, limit=200)
            assert val == pytest.approx(1.0, abs=1e-6)


def test_sonine_conjugate_absent_for_multi_term():
    assert sonine_conjugate(MultiTerm(((1.0, 0.3), (1.0, 0.7)))) is None


@pytest.mark.parametrize("spec, kind", [
    ("power_law:0.5", PowerLaw),
    ("multi_term:1,0.3;1,0.7", MultiTerm),
    ("distributed:uniform:8", DistributedOrder),
    ('{"type": "power_law", "alpha": 0.25}', PowerLaw),
    ({"type": "multi_term", "terms": [[2, 0.4]]}, MultiTerm),
])
def test_parse_kernel_forms(spec, kind):
    k = parse_kernel(spec)
    assert isinstance(k, kind)
    assert parse_kernel(k.to_config()).describe() == k.describe()


@pytest.mark.parametrize("spec", ["power_law:1.5", "power_law:x", "gamma:1", "{bad json",
                                  {"alpha": 0.5}, {"type": "power_law"}])
def test_parse_kernel_rejects_malformed(spec):
    with pytest.raises(DomainError):
        parse_kernel(spec)
