import warnings

import numpy as np
import pytest
from hypothesis import settings

from mamsketch.measure import SizingWarning

settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_sizing():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SizingWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
