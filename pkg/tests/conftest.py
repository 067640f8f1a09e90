import pytest
from hypothesis import HealthCheck, settings

from cpsfuzz.netbus import Bus

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def warm_bus():
    """A plant 500 ticks into normal operation; fork before use."""
    bus = Bus.create()
    bus.idle(500)
    return bus


@pytest.fixture(scope="session")
def quiet_bus():
    bus = Bus.create(noiseless=True)
    bus.idle(500)
    return bus


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
