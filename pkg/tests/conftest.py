from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
SYNTHETIC_CSV = FIXTURES / "synthetic_carbon_monitor_china.csv"


@pytest.fixture(scope="session")
def synthetic_csv() -> Path:
    return SYNTHETIC_CSV


@pytest.fixture(scope="session")
def synthetic_series():
    from chronocast.data import load_series

    return load_series(SYNTHETIC_CSV)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
