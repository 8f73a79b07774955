import pytest

_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _results.get(n, (title, True, ""))
        ok = prev[1] and report.outcome == "passed"
        detail = prev[2] or ("" if report.outcome == "passed" else str(report.longrepr).splitlines()[-1][:160])
        _results[n] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, ok, detail = _results[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}"
        if not ok and detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
