"""Shared pytest configuration: per-criterion acceptance summary."""

from __future__ import annotations

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")

_DESCRIPTIONS = {
    1: "intensity recursion matches closed form",
    2: "stability margin matches dense eigensolver",
    3: "batch fit error decreases with K and separates the pattern",
    4: "fixed-decay objective trace non-increasing",
    5: "filter fast path, gradient, and curvature identity",
    6: "sequential fit recovery and decay robustness",
    7: "decay profile peaks at the true value",
    8: "particle filter/smoother match exact recursions",
    9: "ensemble EM learns and smoother tightens",
    10: "agent-data rates, error trend, and separation",
    11: "metric spot values and scale invariance",
    12: "stochastic subcommands bit-reproducible",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[int, set[str]] = {}
    for key in ("passed", "failed", "error", "xfailed", "xpassed"):
        for report in terminalreporter.stats.get(key, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match:
                outcomes.setdefault(int(match.group(1)), set()).add(key)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        keys = outcomes[n]
        if keys & {"failed", "error", "xpassed"}:
            status = "FAIL"
        elif "xfailed" in keys:
            status = (
                "XFAIL (strict separation unattainable on agent data; "
                "see notes) — remaining sub-checks PASS"
                if "passed" in keys
                else "XFAIL (documented)"
            )
        else:
            status = "PASS"
        terminalreporter.write_line(
            f"criterion {n:2d} ({_DESCRIPTIONS.get(n, '?')}): {status}"
        )
