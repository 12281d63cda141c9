"""Shared pytest wiring: per-criterion pass/fail lines in the summary.

Tests marked ``@pytest.mark.criterion(n, "label")`` report one
``CRITERION n: PASS|FAIL`` line at the end of the run, independent of
output capturing.
"""

import pytest

_CRITERION_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(n, label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, label = marker.args
    if report.when == "call":
        if report.skipped:
            _CRITERION_RESULTS[n] = ("SKIPPED", label)
        else:
            _CRITERION_RESULTS[n] = ("PASS" if report.passed else "FAIL",
                                     label)
    elif report.when == "setup" and not report.passed:
        _CRITERION_RESULTS[n] = ("SKIPPED" if report.skipped else "FAIL",
                                 label)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_CRITERION_RESULTS):
        status, label = _CRITERION_RESULTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {status} ({label})")
