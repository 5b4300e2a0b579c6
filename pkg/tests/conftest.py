"""Collect acceptance-criterion outcomes and print one line per criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    failed = report.failed or (report.when == "call" and report.outcome == "skipped")
    prev = _RESULTS.get(number, (title, "PASS"))[1]
    status = "FAIL" if failed or prev == "FAIL" else "PASS"
    _RESULTS[number] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}")
