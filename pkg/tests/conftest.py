import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    entry = _criteria.setdefault(number, {"title": title, "failed": False, "ran": False, "notes": []})
    entry["failed"] |= failed
    if report.when == "call":
        entry["ran"] = True
        entry["notes"] = [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "FAIL" if e["failed"] or not e["ran"] else "PASS"
        notes = ("  [" + ", ".join(e["notes"]) + "]") if e["notes"] else ""
        terminalreporter.write_line(f"criterion {number:2d} {status}  {e['title']}{notes}")
