import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _results.setdefault(n, {"title": title, "ok": True, "notes": []})
    if report.when == "call" or report.failed:
        if report.failed:
            entry["ok"] = False
            message = report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") \
                else str(report.longrepr)
            entry["notes"].append(f"{item.name}: {message.splitlines()[0] if message else 'failed'}")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        entry = _results[n]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {status}  {entry['title']}")
        for note in entry["notes"]:
            terminalreporter.write_line(f"              {note}")
