import numpy as np
import pytest

from ebbi.collision import DistributionFunction, build_grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, spread=1.0):
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    g = (Q * np.exp(rng.uniform(-spread, spread, 3))) @ Q.T
    return 0.5 * (g + g.T)


def bump(grid, radius, amplitude=1.0):
    r2 = np.einsum("...a,...a->...", grid.nodes, grid.nodes)
    x = np.minimum(r2 / radius ** 2, 1.0)
    v = np.zeros_like(r2)
    inside = x < 1.0
    v[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - x[inside]))
    return DistributionFunction(grid, v)


@pytest.fixture
def small_grid():
    return build_grid(9, 4.0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
