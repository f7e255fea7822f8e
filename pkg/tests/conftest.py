import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from artifact.oned import Weight, WeightedProblem1D
from artifact.potential import PotentialSpec

settings.register_profile(
    "artifact", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("artifact")

C2_ZERO = (4 * math.log(2) - 1) / 3


def polynomial_spec(coeffs, a, b):
    """Plug-in potential from polynomial coefficients (increasing powers)."""
    p = np.polynomial.Polynomial(coeffs)
    return PotentialSpec.from_callables(p, p.deriv(1), p.deriv(2), a, b)


@pytest.fixture(scope="session")
def quartic():
    return PotentialSpec.quartic()


@pytest.fixture(scope="session")
def layer_problem(quartic):
    """omega = 1 - t/4 on [0, 1/4], alpha = 0, beta_eps = b - eps^1.5."""
    return WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, -0.25), 0.04, 0.0, 1.5)
