import os
import subprocess
import sys

import numpy as np
import pytest

from dgwf import _accel
from dgwf.kernels import GradientKernel
from dgwf.solvers import local_wirtinger_gradient

needs_numba = pytest.mark.skipif(_accel.numba is None, reason="numba not installed")


def kernels_for(problem):
    src, dst, data = problem.directed
    out = {"numpy": GradientKernel(problem.sampling, src, dst, data, backend="numpy")}
    if _accel.numba is not None:
        out["numba"] = GradientKernel(problem.sampling, src, dst, data, backend="numba")
    return out


@pytest.mark.parametrize("fixture", ["problem", "sparse_problem"])
def test_agent_gradients_match_reference(fixture, request, rng):
    p = request.getfixturevalue(fixture)
    X = rng.standard_normal((p.num_agents, p.num_voxels)) + 1j * rng.standard_normal((p.num_agents, p.num_voxels))
    ref = np.stack(
        [local_wirtinger_gradient(i, X[i], p.sampling, p.measurements, p.graph) for i in range(p.num_agents)]
    )
    for name, k in kernels_for(p).items():
        np.testing.assert_allclose(k.agent_gradients(X), ref, rtol=1e-12, atol=1e-14, err_msg=name)


@pytest.mark.parametrize("fixture", ["problem", "sparse_problem"])
def test_mean_gradient_is_average(fixture, request, rng):
    p = request.getfixturevalue(fixture)
    x = rng.standard_normal(p.num_voxels) + 1j * rng.standard_normal(p.num_voxels)
    for name, k in kernels_for(p).items():
        avg = k.agent_gradients(np.tile(x, (p.num_agents, 1))).mean(axis=0)
        np.testing.assert_allclose(k.mean_gradient(x), avg, rtol=1e-12, atol=1e-14, err_msg=name)


@needs_numba
def test_backends_agree_on_paper_sized_arrays(rng):
    N, S, K = 6, 64, 144
    A = rng.standard_normal((N, S, K)) + 1j * rng.standard_normal((N, S, K))
    src = np.repeat(np.arange(N), N - 1)
    dst = np.array([j for i in range(N) for j in range(N) if j != i])
    data = rng.standard_normal((len(src), S)) + 1j * rng.standard_normal((len(src), S))
    X = rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))
    a = GradientKernel(A, src, dst, data, backend="numpy").agent_gradients(X)
    b = GradientKernel(A, src, dst, data, backend="numba").agent_gradients(X)
    np.testing.assert_allclose(b, a, rtol=1e-10)


def test_rejects_isolated_agent_and_unsorted_edges():
    A = np.ones((3, 1, 2), dtype=complex)
    with pytest.raises(ValueError, match="no neighbours"):
        GradientKernel(A, [0, 1], [1, 0], np.ones((2, 1)))
    with pytest.raises(ValueError, match="sorted"):
        GradientKernel(A, [1, 0], [0, 1], np.ones((2, 1)))
    with pytest.raises(ValueError, match="backend"):
        GradientKernel(A[:2], [0, 1], [1, 0], np.ones((2, 1)), backend="cuda")


def test_disable_flag_selects_numpy():
    env = dict(os.environ, DGWF_DISABLE_JIT="1")
    out = subprocess.run(
        [sys.executable, "-c", "from dgwf import _accel; print(_accel.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
