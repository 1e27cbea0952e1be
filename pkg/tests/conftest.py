import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")

_acceptance = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or "::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("detail", "")
        _acceptance[report.nodeid] = (report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (passed, detail) in sorted(_acceptance.items(), key=lambda kv: _order(kv[0])):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def _order(nodeid):
    name = nodeid.split("::test_criterion_")[-1]
    return int(name.split("_")[0])
