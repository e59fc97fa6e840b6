import pytest

_RESULTS: dict[int, list[bool]] = {}
_TITLES: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    _TITLES[n] = title
    _RESULTS.setdefault(n, []).append(call.excinfo is None)


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok = all(_RESULTS[n])
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {_TITLES[n]} "
                      f"({sum(_RESULTS[n])}/{len(_RESULTS[n])} checks)")
