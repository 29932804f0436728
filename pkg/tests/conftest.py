import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from linfbsde.core import COEFF_NAMES, CoeffMatrix, LinearFBSDE

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

reals = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)
coeff_matrices = st.builds(CoeffMatrix, *([reals] * 9))


def random_matrices(rng: np.random.Generator, k: int, scale: float = 3.0) -> list[CoeffMatrix]:
    arr = rng.uniform(-scale, scale, size=(k, len(COEFF_NAMES)))
    return [CoeffMatrix(*row) for row in arr]


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def zero_system():
    return LinearFBSDE(CoeffMatrix.zeros(), 0.0)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
