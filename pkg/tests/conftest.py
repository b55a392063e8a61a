import numpy as np
import pytest

from mimofl.model import SystemConfig, generate_network


@pytest.fixture(scope="session")
def default_cfg():
    return SystemConfig.default_scenario()


@pytest.fixture(scope="session")
def default_ch(default_cfg):
    return generate_network(default_cfg, 1)


def random_cfg(rng, M=100, N=3, max_K=10):
    K = int(rng.integers(2, max_K + 1))
    return SystemConfig.default_scenario(M=M, N=N, K=K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
