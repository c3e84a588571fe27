import time
from collections import OrderedDict

import pytest

_criteria: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "notes": []})
    if not rep.passed:
        entry["ok"] = False
    for key, value in item.user_properties:
        if key == "detail":
            entry["notes"].append(f"{item.name.split('[')[0]}: {value}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        tr.write_line(f"criterion {n} [{'PASS' if e['ok'] else 'FAIL'}] {e['title']}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement to the acceptance summary."""
    def add(text):
        record_property("detail", text)
    return add


@pytest.fixture
def stopwatch():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0
