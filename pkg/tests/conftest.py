import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion membership")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "results": []})
    if rep.when == "call":
        state = "xfail" if hasattr(rep, "wasxfail") else rep.outcome
        entry["results"].append((item.name, state))
    elif rep.when == "setup" and rep.outcome != "passed":
        entry["results"].append((item.name, "skipped" if rep.skipped else "failed"))


def _verdict(results):
    states = {s for _, s in results}
    if not results:
        return "NOT RUN"
    if "failed" in states:
        return "FAIL"
    if "xfail" in states:
        return "FAIL (known, see notes)"
    if states == {"skipped"}:
        return "NOT RUN"
    if "skipped" in states:
        return "PASS (partial: some parts not run)"
    return "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        tr.write_line(f"criterion {num}: {_verdict(e['results'])} -- {e['title']}")
        for name, state in e["results"]:
            if state != "passed":
                tr.write_line(f"    {name}: {state}")
