import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from inflap import DomainSpec, build_domain, continuation_sweep

settings.register_profile("inflap", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("inflap")

SHAPES = {
    "disk": DomainSpec("disk"),
    "square": DomainSpec("rectangle"),
    "l_shape": DomainSpec("l_shape"),
    "annulus": DomainSpec("annulus"),
}


@pytest.fixture(scope="session")
def specs():
    return SHAPES


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disk32():
    return build_domain(SHAPES["disk"], 1 / 32)


@pytest.fixture(scope="session")
def square16():
    return build_domain(SHAPES["square"], 1 / 16)


@pytest.fixture(scope="session")
def disk_sweep32(disk32):
    """Warm-started sweep on the disk at h = 1/32."""
    return continuation_sweep(disk32, [2, 4, 8, 10, 16, 32, 64, 128])


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
