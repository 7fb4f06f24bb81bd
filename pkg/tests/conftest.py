"""Prints the acceptance verdict lines after the pytest run."""

import pytest

from acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str) -> bool:
        line = f"Criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        RESULTS.append(line)
        print(line)
        return ok

    return _record
