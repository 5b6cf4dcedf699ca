import re

import pytest

from mlob import (PowerLawBook, ValueField, critical_points, power_law_spec,
                  solve_boundary)


class Preset:
    """One solved market: spec, critical points, boundary, value field."""

    def __init__(self, c, r, beta, delta, theta_max):
        self.c, self.r, self.beta, self.delta = c, r, beta, delta
        self.book = PowerLawBook(c, r, beta)
        self.spec = power_law_spec(self.book, delta)
        self.cp = critical_points(self.spec)
        self.fb = solve_boundary(self.spec, self.cp, theta_max)
        self.field = ValueField(self.spec, self.cp, self.fb)


@pytest.fixture(scope="session")
def r1():
    return Preset(1.0, 1.0, 1.0, 0.5, theta_max=12.0)


@pytest.fixture(scope="session")
def r05():
    return Preset(1.0, 0.5, 1.0, 0.1, theta_max=12.0)


# one terminal line per acceptance criterion, printed whether or not the
# test's own output was captured
_ac_results: dict = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1].split("[")[0]
    if not re.match(r"test_ac\d\d_", name):
        return
    if report.when == "call" or report.failed:
        passed = _ac_results.get(name, True) and not report.failed
        _ac_results[name] = passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ac_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ac_results):
        verdict = "PASS" if _ac_results[name] else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
