import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or not (rep.when == "call" or rep.failed):
        return
    n, text = m.args
    failed = rep.failed or _RESULTS.get(n, ("", "PASS"))[1] == "FAIL"
    _RESULTS[n] = (text, "FAIL" if failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        text, verdict = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  {text}")
