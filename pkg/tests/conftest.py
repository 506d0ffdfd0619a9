import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results: dict[int, list[tuple[str, str]]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = report.outcome if report.outcome != "skipped" else "skipped"
        _results.setdefault(int(m.group(1)), []).append((report.nodeid.split("::")[-1], outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        outcomes = {o for _, o in _results[n]}
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes == {"skipped"}:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        tally = ", ".join(f"{sum(o == k for _, o in _results[n])} {k}"
                          for k in ("passed", "failed", "skipped") if k in outcomes)
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  ({tally})")


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)
