import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

# numba kernels compile on first call; no per-example deadline
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] #{number:>2}  {detail}")
