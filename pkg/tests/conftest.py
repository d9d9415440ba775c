import numpy as np
import pytest

from dgwf.graph import complete_graph, small_world
from dgwf.scene import synthesize_measurements
from dgwf.solvers import Problem

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def random_problem(num_agents=5, K=6, S=4, seed=0, graph=None, noise=0.0):
    """Small problem with Gaussian sampling vectors and a random scene."""
    rng = np.random.default_rng(seed)
    A = (rng.standard_normal((num_agents, S, K)) + 1j * rng.standard_normal((num_agents, S, K))) / np.sqrt(2 * K)
    rho = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    g = graph if graph is not None else complete_graph(num_agents)
    meas = synthesize_measurements(A, rho, g)
    if noise:
        from dgwf.scene import add_noise

        meas = add_noise(meas, noise, rng_seed=seed)
    return Problem(A, meas, g, rho)


@pytest.fixture
def problem():
    return random_problem()


@pytest.fixture
def sparse_problem():
    return random_problem(num_agents=8, graph=small_world(8, 0.2, 2, rng_seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
