import numpy as np
import pytest

from bigrf.data import Dataset, SimulationSpec, simulate_weston


def random_dataset(n, p, seed=0, n_classes=2, levels=None):
    """Random features (optionally on a small integer grid, to force ties) and labels."""
    rng = np.random.default_rng(seed)
    if levels:
        X = rng.integers(0, levels, size=(n, p)).astype(np.float64)
    else:
        X = rng.normal(size=(n, p))
    y = rng.integers(0, n_classes, size=n)
    return Dataset(X, y, n_classes=n_classes)


@pytest.fixture(scope="session")
def weston_small():
    return simulate_weston(SimulationSpec(2000, seed=11))


@pytest.fixture(scope="session")
def weston_test():
    return simulate_weston(SimulationSpec(2000, seed=12))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
