import sys

import pytest

from hsgdlab import build_problem


@pytest.fixture
def identity_spec():
    def make(d=4, **kw):
        cfg = {"dim": d, "spectrum.kind": "identity", "gamma": 1.0, "delta": 0.0, "noise_std": 0.0, "seed": 0}
        cfg.update(kw)
        return build_problem(cfg)

    return make


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
