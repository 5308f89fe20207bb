import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cirsharp import synthetic

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bundled():
    """(csv path, config path) of the packaged 68-point sample."""
    csv_path, cfg_path = synthetic.bundled_paths()
    return str(csv_path), str(cfg_path)


def write_csv(path, columns, start=dt.date(2020, 1, 31)):
    """Write a rate file with month-end dates and the given value columns."""
    n = len(next(iter(columns.values())))
    synthetic.write_rate_csv(path, columns, synthetic.monthly_dates(n, start))
    return str(path)


# one line per acceptance criterion, repeated in the terminal summary so the
# verdicts are visible even when output capture is on
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
