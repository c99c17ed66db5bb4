from pathlib import Path

import pytest

from onftrap.config import default_config, load_config

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance.py; printed once at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def run_config():
    return default_config()


@pytest.fixture(scope="session")
def trap_config(run_config):
    return run_config.trap


@pytest.fixture(scope="session")
def atom(trap_config):
    return trap_config.atom


@pytest.fixture(scope="session")
def fast_config_path():
    return FIXTURES / "fast.yaml"


@pytest.fixture(scope="session")
def fast_config(fast_config_path):
    return load_config(fast_config_path)


@pytest.fixture(scope="session")
def report_on(trap_config):
    from onftrap.trap import analyze_trap

    return analyze_trap(trap_config)


@pytest.fixture(scope="session")
def report_off(trap_config):
    from onftrap.trap import analyze_trap

    return analyze_trap(trap_config.without_probe())


@pytest.fixture(scope="session")
def scenario(trap_config):
    from onftrap.dynamics import _Scenario

    return _Scenario(trap_config)
