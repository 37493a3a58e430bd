"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_LINES = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.passed else "FAIL"
        _LINES[props["criterion"]] = f"criterion {props['criterion']:>2}: {verdict}  {props.get('detail', '')}"


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_LINES):
        terminalreporter.write_line(_LINES[key])
