"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import re

_RESULTS = {}
_NAME = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.outcome == "failed":
        detail = dict(report.user_properties).get("detail", "")
        if key not in _RESULTS or report.outcome == "failed":
            _RESULTS[key] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (outcome, detail) in sorted(_RESULTS.items()):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num:2d} {name}: {verdict}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
