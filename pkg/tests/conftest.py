import re

import numpy as np
import pytest

import simfit.algorithms as algorithms
from simfit.core import mse

_ACCEPTANCE = {}
_REPORTS_CHECKED = [0]


@pytest.fixture(autouse=True)
def bookkeeping_guard(monkeypatch):
    """Every TrainReport built during a test must satisfy the incumbent invariant."""
    made = []
    original = algorithms._Bookkeeper.report

    def recording(self, started):
        rep = original(self, started)
        made.append((rep, self.validation))
        return rep

    monkeypatch.setattr(algorithms._Bookkeeper, "report", recording)
    yield made
    for rep, validation in made:
        vals = [v for _, _, v in rep.mse_trace]
        assert rep.best_val_mse == min(vals)
        assert rep.mse_trace[rep.best_index][2] == rep.best_val_mse
        assert mse(rep.model, validation) == rep.best_val_mse
    _REPORTS_CHECKED[0] += len(made)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if m and (report.when == "call" or report.outcome != "passed"):
        key = int(m.group(1))
        if report.when == "call" or key not in _ACCEPTANCE:
            _ACCEPTANCE[key] = (m.group(2), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            name, outcome = _ACCEPTANCE[key]
            tag = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"criterion {key:2d} [{tag}] {name}")
    terminalreporter.write_line(f"train reports checked for book-keeping: {_REPORTS_CHECKED[0]}")
