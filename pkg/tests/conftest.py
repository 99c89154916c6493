import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from fiberpol.process import ExponentialLength, FiberModel, TwoPointTwist

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def reference_model():
    return FiberModel(TwoPointTwist(0.1), ExponentialLength(1.0), seed=7)


def pytest_terminal_summary(terminalreporter):
    results = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            results = getattr(mod, "RESULTS", results) or results
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
