import numpy as np
import pytest
from hypothesis import strategies as st

from sicmdp.core import TabularSICMDP


def random_model(rng, S=4, A=3, gamma=0.9, constraints=None) -> TabularSICMDP:
    P = rng.dirichlet(np.ones(S), size=(S, A))
    r = rng.random((S, A))
    mu = rng.dirichlet(np.ones(S))
    return TabularSICMDP(P, r, mu, gamma, constraints)


def random_policy(rng, S, A, floor=0.0):
    p = rng.dirichlet(np.ones(A), size=S) + floor
    return p / p.sum(axis=1, keepdims=True)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
