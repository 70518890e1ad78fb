import pytest

from hif.core import HifConfig


@pytest.fixture
def cfg():
    return HifConfig()


@pytest.fixture
def cfg0():
    """Default config with zero containment tolerance."""
    return HifConfig(containment_tolerance=0.0)


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
