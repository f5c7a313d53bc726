import pytest

from conveyor.core import PhysicalParams, build_grid
from conveyor.propagator import Settings

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_grid():
    """dx = 0.1 on [-51.2, 51.2]; enough for unit tests of bound dynamics."""
    return build_grid(-51.2, 51.2, 1024)


@pytest.fixture(scope="session")
def small_settings(small_grid):
    return Settings(params=PhysicalParams(), grid=small_grid, dt=0.01, sample_stride=10)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per criterion; lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record
