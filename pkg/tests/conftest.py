from collections import defaultdict

import pytest

_results: dict[int, list[tuple[str, str]]] = defaultdict(list)
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and short title")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n, title = getattr(report, "_criterion", (None, None))
    if n is None:
        return
    _titles[n] = title
    _results[n].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        parts = _results[n]
        ok = all(o == "passed" for _, o in parts)
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {_titles[n]}")
        if not ok:
            for name, o in parts:
                if o != "passed":
                    tr.write_line(f"    {o}: {name}")
