import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from slrank import Impression  # noqa: E402


def random_impression(rng, m, n, lam, epsilon=1e-4):
    h = np.sort(rng.random(m))[::-1]
    return Impression.from_arrays(h, rng.random(n), rng.random(n), lam, epsilon)


@pytest.fixture
def two_item():
    """One slot, a lucrative irrelevant item and a relevant cheap one."""
    return Impression.from_arrays([1.0], [0.1, 1.0], [10.0, 1.0], 0.5, 1e-6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
