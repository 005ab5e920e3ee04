import numpy as np
import pytest

from stablelike.process import BetaFunction


@pytest.fixture
def beta_span():
    """Index map rising from 0.3 to 0.7 over [0, 0.5]."""
    return BetaFunction.from_knots(0.3, [(0.0, 0.3), (0.5, 0.7)])


def within_se(values, expected, k=3.0):
    values = np.asarray(values, dtype=float)
    se = values.std(ddof=1) / np.sqrt(values.size)
    return abs(values.mean() - expected) <= k * se, values.mean(), se


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store the one-line verdict printed at the end of the run."""
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
