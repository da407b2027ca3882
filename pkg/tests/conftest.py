"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    VERDICTS[number] = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(VERDICTS[number])


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
