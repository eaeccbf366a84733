import sys

import pytest

from minereg.fixtures import generate_market_fixture


@pytest.fixture(scope="session")
def summary_matched_records():
    return generate_market_fixture(months=12, seed=7, match_table1=True)


@pytest.fixture(scope="session")
def short_records():
    return generate_market_fixture(months=2, seed=11, match_table1=True)



def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
