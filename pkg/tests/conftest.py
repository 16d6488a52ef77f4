import re

import numpy as np
import pytest

from roughstab.rough_core import FbmSpec, TimeGrid, sample_fbm_rough

_DETAILS = {}
_OUTCOMES = {}
_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


@pytest.fixture
def acceptance(request):
    """Dict a criterion test fills with a one-line detail for the summary."""
    info = {}
    _DETAILS[request.node.nodeid] = info
    return info


def pytest_runtest_logreport(report):
    if _CRITERION.search(report.nodeid) and (report.when == "call" or report.outcome != "passed"):
        _OUTCOMES.setdefault(report.nodeid, report.outcome)
        if report.outcome != "passed":
            _OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    rows = []
    for nodeid, outcome in _OUTCOMES.items():
        m = _CRITERION.search(nodeid)
        rows.append((int(m.group(1)), m.group(2), outcome, _DETAILS.get(nodeid, {}).get("detail", "")))
    for num, name, outcome, detail in sorted(rows):
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{tag}] {num:2d} {name}: {detail}")


@pytest.fixture(scope="session")
def fbm2():
    """A 2-channel H=0.4 lift on [0, 1] with 64 steps."""
    return sample_fbm_rough(FbmSpec(0.4, 2, 11, TimeGrid.uniform(0.0, 1.0, 64), lift_level=4))


@pytest.fixture(scope="session")
def fbm1():
    return sample_fbm_rough(FbmSpec(0.4, 1, 12, TimeGrid.uniform(0.0, 1.0, 64), lift_level=4))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
