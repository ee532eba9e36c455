"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import re
from collections import defaultdict

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    outcomes = defaultdict(list)
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match and (report.when == "call" or status != "passed"):
                outcomes[int(match.group(1))].append(status)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        statuses = outcomes[number]
        if any(s in ("failed", "error") for s in statuses):
            verdict = "FAIL"
        elif all(s == "skipped" for s in statuses):
            verdict = "SKIPPED"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict} ({len(statuses)} checks)")
