import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from stoc.data import synth_blobs  # noqa: E402

_criteria: dict[str, dict] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs():
    return synth_blobs(200, 20, 8, 6.0, seed=7)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "status": "PASS", "details": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        measured = [str(v) for k, v in item.user_properties if k == "measured"]
        if hasattr(report, "wasxfail"):
            status, note = ("XFAIL", report.wasxfail) if report.skipped else ("PASS", "unexpectedly passed")
        elif report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
            status, note = "NOT RUN", reason.removeprefix("Skipped: ")
        elif report.failed:
            status, note = "FAIL", ""
        else:
            status, note = "PASS", ""
        entry["status"] = _worst(entry["status"], status)
        text = "; ".join(measured + ([note] if note else []))
        if text or status != "PASS":
            entry["details"].append(f"{status:<7} {item.name}" + (f": {text}" if text else ""))


_ORDER = ("PASS", "XFAIL", "NOT RUN", "FAIL")


def _worst(a: str, b: str) -> str:
    return a if _ORDER.index(a) >= _ORDER.index(b) else b


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria, key=lambda s: (int(s.rstrip("abc")), s)):
        entry = _criteria[number]
        tr.write_line(f"[{entry['status']:>7}] criterion {number}: {entry['title']}")
        for detail in entry["details"]:
            tr.write_line(f"            {detail}")
