import numpy as np
import pytest

from fxtadapt import available_backends
from fxtadapt import estimation, qp, systems

BACKENDS = sorted(available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per importable kernel backend."""
    mod = available_backends()[request.param]
    for target in (estimation, qp, systems):
        monkeypatch.setattr(target, "kernels", mod)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_TRACES = {}


@pytest.fixture(scope="session")
def scenario_trace():
    """Shipped scenario traces, simulated once per test session."""
    from fxtadapt.sim import run_closed_loop, scenario_config

    def get(name):
        if name not in _TRACES:
            _TRACES[name] = run_closed_loop(scenario_config(name))
        return _TRACES[name]

    return get


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
