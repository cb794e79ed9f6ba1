"""Shared pytest configuration.

Tests marked with ``@pytest.mark.criterion(code, title)`` are the release
gates for the toolkit.  After the normal pytest output we print a compact
one-line-per-gate scoreboard so a release run can be skimmed at a glance.
"""

from __future__ import annotations

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(code, title): marks a test as a named release gate",
    )
    config._criterion_index = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            code, title = mark.args
            config._criterion_index[item.nodeid] = (str(code), str(title))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    index = getattr(config, "_criterion_index", {})
    if not index:
        return
    outcomes = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, ()):
            nodeid = getattr(report, "nodeid", None)
            if nodeid in index and getattr(report, "when", "call") in ("call", "collect"):
                # A failed setup/teardown also sinks the gate.
                current = outcomes.get(nodeid)
                if current != "failed":
                    outcomes[nodeid] = "failed" if status in ("failed", "error") else status
    lines = []
    for nodeid, (code, title) in sorted(index.items(), key=lambda kv: kv[1][0]):
        status = outcomes.get(nodeid, "not run")
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(status, "MISSING")
        lines.append(f"{code:<6} {word:<8} {title}")
    terminalreporter.write_sep("=", "release gates")
    for line in lines:
        terminalreporter.write_line(line)
