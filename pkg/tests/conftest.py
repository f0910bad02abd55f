"""Acceptance-criterion reporting: one PASS/FAIL line per ``criterion`` marked test."""
import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS[number] = (title, report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome, seconds = _RESULTS[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title} ({seconds:.1f}s)")
    passed = sum(o == "passed" for _, o, _ in _RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(_RESULTS)} acceptance criteria passed")
