import re
import sys
from pathlib import Path

# make tests/oracles.py importable regardless of invocation directory
sys.path.insert(0, str(Path(__file__).parent))

_CRITERION_RE = re.compile(r"test_acceptance\.py::.*test_c(\d+)")

_criterion_outcomes: dict[int, list[tuple[str, bool]]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = _CRITERION_RE.search(report.nodeid)
    if match:
        num = int(match.group(1))
        _criterion_outcomes.setdefault(num, []).append((report.nodeid, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _criterion_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criterion_outcomes):
        results = _criterion_outcomes[num]
        ok = all(passed for _, passed in results)
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}")
