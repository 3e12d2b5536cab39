"""Shared fixtures plus the acceptance-criterion summary.

Acceptance tests follow the naming convention test_cNN_*; the terminal
summary prints one PASS/FAIL line per criterion number so the acceptance
status is readable without scanning individual test ids.
"""

import re
from collections import defaultdict
from pathlib import Path

import pytest

_CRITERION_RE = re.compile(r"test_c(\d{2})_")
_outcomes: dict[str, list[tuple[str, bool]]] = defaultdict(list)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    match = _CRITERION_RE.search(item.name)
    if match:
        _outcomes[match.group(1)].append((item.nodeid, report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_outcomes):
        results = _outcomes[number]
        ok = all(passed for _, passed in results)
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"criterion {number}: {status} ({sum(p for _, p in results)}/{len(results)} checks)"
        )
        if not ok:
            for nodeid, passed in results:
                if not passed:
                    terminalreporter.write_line(f"  failed: {nodeid}")
