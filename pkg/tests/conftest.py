"""Shared pytest plumbing: a per-criterion summary for the acceptance suite."""

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for name, outcome in sorted(_ACCEPTANCE_RESULTS):
        label = name.replace("test_criterion_", "criterion ")
        status = "PASS" if outcome == "passed" else "FAIL"
        tw.write_line(f"{label:<58s} {status}")
