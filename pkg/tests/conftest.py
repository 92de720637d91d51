import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)$")
_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    number, label = int(match.group(1)), match.group(2).replace("_", " ")
    failed = report.failed
    if report.when == "call" or failed:
        previous = _outcomes.get(number, ("PASS", label))[0]
        _outcomes[number] = ("FAIL" if failed or previous == "FAIL" else "PASS", label)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        status, label = _outcomes[number]
        terminalreporter.write_line(f"{status} criterion {number:2d}: {label}")
    passed = sum(s == "PASS" for s, _ in _outcomes.values())
    terminalreporter.write_line(f"{passed}/{len(_outcomes)} criteria pass")
