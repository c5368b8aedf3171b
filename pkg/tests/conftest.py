import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcrk.geom import seeded_rng  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return seeded_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
