import numpy as np
import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the lines are repeated in the run summary."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        _CRITERIA.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable_supply(rng, n):
    """Random minimal stable SISO realization with a positive feedthrough."""
    from varinertia import LtiSupply

    while True:
        poles = -rng.uniform(0.1, 10.0, n)
        V = rng.normal(size=(n, n))
        if abs(np.linalg.det(V)) < 0.1:
            continue
        A = V @ np.diag(poles) @ np.linalg.inv(V)
        B = rng.normal(size=(n, 1))
        C = rng.normal(size=(1, n))
        sys = LtiSupply(A, B, C, float(rng.uniform(0.5, 5.0)))
        if sys.is_minimal():
            return sys
