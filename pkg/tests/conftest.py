import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.split("::")[-1]
        _criteria.append((name, "PASS" if report.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _criteria:
        terminalreporter.write_line(f"{verdict}  {name}  {detail}")
