import os

import pytest
from hypothesis import HealthCheck, settings

from cortexflow.cortex import coercivity_monitor

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def coercivity_over_session():
    """Every energy evaluated anywhere in the suite must respect the coercivity bound.

    ``total_energy`` raises on a violation; this records how many reports were
    checked and fails the session if the worst margin slipped below tolerance.
    """
    coercivity_monitor.reset()
    yield coercivity_monitor
    assert coercivity_monitor.worst_margin >= -1e-6, coercivity_monitor.worst_margin


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
    m = coercivity_monitor
    terminalreporter.write_line(
        f"{'PASS' if m.worst_margin >= -1e-6 else 'FAIL'}  criterion 2 (whole session): "
        f"{m.count} energy reports, worst margin above the bound {m.worst_margin:.4f}"
    )
