"""Shared fixtures plus per-criterion pass/fail lines for the acceptance run."""

import numpy as np
import pytest


def pytest_runtest_logreport(report):
    # One visible line per acceptance criterion, printed whether or not
    # output capturing is on.
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {status} {name} ({report.duration:.1f}s)", flush=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
