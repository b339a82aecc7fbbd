"""Numerical engine for the general time-fractional diffusion equation.

The time derivative is the convolution-type operator

    D_k u(t) = d/dt int_0^t k(t - s) (u(s) - u(0)) ds

with a completely positive kernel k given as a positive sum of power laws.
The package evaluates the relaxation function Y(t, lam), solves the scalar
and spatially extended problems, builds the subordination density and
checks the known a priori estimates numerically, recording each one in a
:class:`VerificationReport`.
"""

from . import _backend
from .cauchy import (
    BoxGrid,
    GridField,
    SolutionSnapshot,
    decay_exponent_fit,
    gaussian,
    single_mode,
    solve_homogeneous,
    solve_with_source,
    verify_homogeneous_estimates,
    verify_positivity,
    verify_source_estimates,
)
from .errors import (
    AccuracyError,
    DomainError,
    GfracError,
    InversionError,
    SamplingError,
    ShapeError,
)
from .gode import (
    TimeGrid,
    solve_inhomogeneous_repr,
    solve_inhomogeneous_stepper,
    solve_relax_ode,
    verify_cross_oracle,
)
from .kernels import (
    DistributedOrder,
    Kernel,
    MultiTerm,
    PowerLaw,
    check_conditions,
    eval_k,
    k_l1_norm,
    laplace_k,
    parse_kernel,
    rate,
)
from .laplace_inversion import InversionResult, invert, invert_cross_checked
from .mittag_leffler import ml, ml_relaxation, ml_with_error
from .relaxation import (
    RelaxationCurve,
    check_complete_monotonicity,
    check_relax_bounds,
    relax,
    relax_time_derivative,
    relaxation_curve,
)
from .report import VerificationReport, merge, parse, render
from .subordination import (
    SubordinationDensity,
    compare_sampler_to_solver,
    psi,
    reconstruct_Y,
    sample_positions,
    subordination_density,
)

__version__ = "0.1.0"
BACKEND = _backend.NAME
