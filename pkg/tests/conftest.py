import time

import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Attach a measured-value summary to an acceptance test."""
    start = time.perf_counter()
    notes = []
    yield notes.append
    request.node.user_properties.append(("detail", "; ".join(notes)))
    request.node.user_properties.append(("seconds", time.perf_counter() - start))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _RESULTS[marker.args[0]] = [marker.args[1], report.passed, "", 0.0]
    if report.when == "teardown" and marker.args[0] in _RESULTS:
        props = dict(item.user_properties)
        _RESULTS[marker.args[0]][2:] = [props.get("detail", ""), props.get("seconds", 0.0)]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, detail, seconds = _RESULTS[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] C{number} {title} ({seconds:.1f} s): {detail}")
