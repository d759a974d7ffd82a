import numpy as np
import pytest

from casbah.model import ObservedDataset

# acceptance criterion -> list of (check name, passed, detail)
CRITERIA = {}


def record(criterion, name, passed, detail=""):
    CRITERIA.setdefault(criterion, []).append((name, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(CRITERIA):
        checks = CRITERIA[criterion]
        ok = all(p for _, p, _ in checks)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}")
        for name, passed, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if passed else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def toy_data(n=10, p=2, seed=0):
    g = np.random.default_rng(seed)
    x = g.integers(0, 2, size=(n, p)).astype(float)
    t = np.tile([0, 1], n // 2 + 1)[:n]
    p_obs = g.normal(1.5, 0.5, n)
    y_obs = 1.0 + 2.0 * p_obs + g.normal(0, 0.5, n)
    return ObservedDataset(x=x, t=t, p_obs=p_obs, y_obs=y_obs)


@pytest.fixture
def toy():
    return toy_data()
