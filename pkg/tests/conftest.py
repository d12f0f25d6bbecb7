import numpy as np
import pytest

from gridnav.harness import WorldGenParams, generate_episodes, generate_world


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} — {detail}"
        pytestconfig._acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def default_world():
    return generate_world(WorldGenParams(), np.random.default_rng(5))


@pytest.fixture(scope="session")
def default_episodes(default_world):
    return generate_episodes(default_world, 20, np.random.default_rng(6))
