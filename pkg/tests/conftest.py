from collections import defaultdict

import pytest

_criteria: dict[int, list[bool]] = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or not report.passed:
        _criteria[marker.args[0]].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria):
        status = "PASS" if all(_criteria[crit]) else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {status}")
