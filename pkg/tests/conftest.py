import pytest

from ringsignal import FundamentalDiagram, RingConfig, SignalPlan

ACCEPTANCE_LINES: list = []

V, W, K, L = 20.0, 5.0, 1 / 7, 1200.0
DELTA, PI0 = 3.0, 0.5


@pytest.fixture
def fd():
    return FundamentalDiagram(V, W, K)


def plan(T, delta=DELTA, pi0=PI0):
    return SignalPlan(T=T, pi0=pi0, delta=delta)


def ring(k0):
    return RingConfig(L, k0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
