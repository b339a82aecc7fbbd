import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gfrac.kernels import DistributedOrder, MultiTerm, PowerLaw

settings.register_profile(
    "gfrac", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("gfrac")


REFERENCE_KERNELS = {
    "power_law": PowerLaw(0.5),
    "multi_term": MultiTerm(((1.0, 0.3), (1.0, 0.7))),
    "distributed": DistributedOrder.uniform(8),
}


@pytest.fixture(params=sorted(REFERENCE_KERNELS))
def reference_kernel(request):
    return REFERENCE_KERNELS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
