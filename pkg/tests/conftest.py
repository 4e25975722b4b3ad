import os
import sys

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from fabry_perot.core_optics import MirrorSpec  # noqa: E402

np.seterr(all="warn")
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile("ci")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end Monte Carlo runs")


@pytest.fixture
def mirror():
    return MirrorSpec.from_reflectivity(0.7)
