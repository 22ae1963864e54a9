import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from modules.lattice import Field, Region

settings.register_profile("ci", max_examples=300, deadline=None)
settings.register_profile("dev", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def block(r0, c0, rows, cols):
    """Solid rectangle with top-left corner (r0, c0)."""
    return Region(tuple((r, c) for r in range(r0, r0 + rows) for c in range(c0, c0 + cols)))


def paint(shape, regions_and_values, base=0.0):
    values = np.full(shape, base, dtype=np.float64)
    for region, value in regions_and_values:
        values[tuple((region.coords() - 1).T)] = value
    return Field.from_array(values)
