import math
import warnings

import numpy as np
import pytest

from conftest import random_problem
from dgwf.graph import complete_graph, small_world
from dgwf.scene import MeasurementSet, synthesize_measurements
from dgwf.solvers import (
    AgentState,
    ConvergenceError,
    DivergenceError,
    Problem,
    SolverConfig,
    backprojection_matrix,
    dgwf_step,
    leading_eigenpair,
    lifted_backprojection,
    lifted_forward,
    local_wirtinger_gradient,
    run_dgwf,
    run_gwf,
    spectral_initialize,
    stacked_step,
    step_schedule,
    thin_indices,
)


class TestStepSchedule:
    def test_start(self):
        assert step_schedule(0) == 0.0

    def test_limit(self):
        assert step_schedule(10**7) == 0.01

    def test_at_tau0(self):
        assert step_schedule(3300) == min(1 - math.exp(-1), 0.01) == 0.01

    def test_warm_up_region(self):
        t = 10
        assert step_schedule(t) == pytest.approx(1 - math.exp(-t / 3300), rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            step_schedule(1, tau0=0)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lambda1=-1)
    with pytest.raises(ValueError):
        SolverConfig(t_max=-1)
    with pytest.raises(ValueError):
        SolverConfig(record_every=0)


class TestSpectralInit:
    def test_scalar_exact(self):
        x = 1.5 - 2j
        A = np.ones((2, 1, 1), dtype=complex)
        g = complete_graph(2)
        meas = synthesize_measurements(A, np.array([x]), g)
        lb = lifted_backprojection(meas, A, g)
        assert lb.matrix[0, 0] == pytest.approx(abs(x) ** 2)
        x0 = spectral_initialize(meas, A, g)
        assert abs(x0[0]) == pytest.approx(abs(x), rel=1e-12)

    def test_zero_measurements(self):
        A = np.ones((3, 2, 4), dtype=complex)
        g = complete_graph(3)
        meas = MeasurementSet(g.edges, np.zeros((3, 2)))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            x0 = spectral_initialize(meas, A, g)
        np.testing.assert_array_equal(x0, 0)

    def test_backprojection_hermitian(self, sparse_problem):
        p = sparse_problem
        M = backprojection_matrix(p.measurements, p.sampling, p.graph)
        assert np.abs(M - M.conj().T).max() <= 1e-12 * np.abs(M).max()

    def test_negative_leading_eigenvalue_clamped(self):
        A = np.ones((2, 1, 1), dtype=complex)
        g = complete_graph(2)
        meas = MeasurementSet(g.edges, np.array([[-4.0]]))
        with pytest.warns(RuntimeWarning, match="negative"):
            x0 = spectral_initialize(meas, A, g)
        np.testing.assert_array_equal(x0, 0)

    def test_eigenpair_matches_lapack(self, rng):
        B = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        M = B + B.conj().T - 3 * np.eye(9)
        lam, v = leading_eigenpair(M)
        w = np.linalg.eigvalsh(M)
        assert lam == pytest.approx(w[-1], rel=1e-8)
        assert np.linalg.norm(M @ v - lam * v) <= 1e-4 * abs(lam)

    def test_non_convergence_reports_residual(self, rng):
        B = rng.standard_normal((20, 20))
        with pytest.raises(ConvergenceError) as err:
            leading_eigenpair(B + B.T, max_iters=2, tol=1e-15)
        assert err.value.residual > 0


class TestGradient:
    def test_zero_at_truth(self, sparse_problem):
        p = sparse_problem
        for i in range(p.num_agents):
            g = local_wirtinger_gradient(i, p.truth, p.sampling, p.measurements, p.graph)
            assert np.linalg.norm(g) <= 1e-12

    def test_zero_at_origin(self, problem):
        g = local_wirtinger_gradient(0, np.zeros(problem.num_voxels), problem.sampling, problem.measurements, problem.graph)
        np.testing.assert_array_equal(g, 0)

    def test_lifted_forward_reproduces_data(self, sparse_problem):
        p = sparse_problem
        X = np.outer(p.truth, p.truth.conj())
        np.testing.assert_allclose(lifted_forward(p.sampling, p.graph.edges, X), p.measurements.values, rtol=1e-12)

    def test_problem_rejects_edgeless_graph(self):
        from dgwf.graph import AgentGraph
        from dgwf.scene import EmptyMeasurementError

        with pytest.raises(EmptyMeasurementError):
            Problem(np.ones((1, 1, 2)), MeasurementSet(np.zeros((0, 2)), np.zeros((0, 1))), AgentGraph(1, np.zeros((0, 2))))


def states_from(X, V):
    return [AgentState(i, X[i].copy(), V[i].copy()) for i in range(len(X))]


class TestUpdateRules:
    def test_fixed_point(self, sparse_problem):
        p = sparse_problem
        X = np.tile(p.truth, (p.num_agents, 1))
        out = dgwf_step(states_from(X, np.zeros_like(X)), p, SolverConfig(), 5000, 1.0)
        for s in out:
            np.testing.assert_allclose(s.x, p.truth, rtol=0, atol=1e-14)
            np.testing.assert_array_equal(s.v, 0)

    def test_zero_penalties_decouple(self, sparse_problem, rng):
        p = sparse_problem
        X = rng.standard_normal((p.num_agents, p.num_voxels)) + 0j
        V = rng.standard_normal(X.shape) + 0j
        cfg = SolverConfig(lambda1=0.0, lambda2=0.0)
        out = dgwf_step(states_from(X, V), p, cfg, 100, 2.0)
        step = cfg.eta(100) / 2.0
        for i, s in enumerate(out):
            g = local_wirtinger_gradient(i, X[i], p.sampling, p.measurements, p.graph)
            np.testing.assert_allclose(s.x, X[i] - step * g, rtol=1e-13)
            np.testing.assert_array_equal(s.v, V[i])

    def test_single_step_matches_stacked(self, sparse_problem, rng):
        p = sparse_problem
        shape = (p.num_agents, p.num_voxels)
        X = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        V = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        V -= V.mean(axis=0)
        cfg = SolverConfig(lambda1=0.7, lambda2=1.3)
        out = dgwf_step(states_from(X, V), p, cfg, 400, 1.7)
        x1, v1 = stacked_step(X.ravel(), V.ravel(), p, cfg, 400, 1.7)
        np.testing.assert_allclose(np.concatenate([s.x for s in out]), x1, rtol=0, atol=1e-14 * np.abs(x1).max())
        np.testing.assert_allclose(np.concatenate([s.v for s in out]), v1, rtol=0, atol=1e-14 * np.abs(v1).max())

    def test_step_from_consensus(self, sparse_problem, rng):
        p = sparse_problem
        x = rng.standard_normal(p.num_voxels) + 1j * rng.standard_normal(p.num_voxels)
        X = np.tile(x, (p.num_agents, 1))
        cfg = SolverConfig()
        x1, v1 = stacked_step(X.ravel(), np.zeros(X.size), p, cfg, 50, 3.0)
        step = cfg.eta(50) / 3.0
        for i in range(p.num_agents):
            g = local_wirtinger_gradient(i, x, p.sampling, p.measurements, p.graph)
            np.testing.assert_allclose(x1.reshape(X.shape)[i], x - step * g, rtol=1e-13)
        np.testing.assert_allclose(v1, 0, atol=1e-15)

    def test_zero_normaliser_rejected(self, problem):
        X = np.zeros((problem.num_agents, problem.num_voxels))
        with pytest.raises(ValueError, match="norm"):
            dgwf_step(states_from(X, X), problem, SolverConfig(), 1, 0.0)

    def test_dual_sum_conserved(self, sparse_problem):
        p = sparse_problem
        tr = run_dgwf(p, SolverConfig(t_max=300, eta_cap=0.05, tau0=10))
        assert np.linalg.norm(tr.v.sum(axis=0)) <= 1e-10 * p.num_agents


class TestDrivers:
    def test_t_max_zero(self, problem):
        tr = run_dgwf(problem, SolverConfig(t_max=0))
        assert tr.t.tolist() == [0] and len(tr) == 1

    def test_gwf_converges_on_small_instance(self):
        p = random_problem(num_agents=6, K=4, S=8, seed=1)
        tr = run_gwf(p, SolverConfig(t_max=3000, tau0=50, eta_cap=0.5))
        assert tr.final_mse <= 1e-8

    def test_dgwf_converges_on_small_instance(self):
        p = random_problem(num_agents=6, K=4, S=8, seed=1, graph=small_world(6, 0.2, 2, rng_seed=0))
        tr = run_dgwf(p, SolverConfig(t_max=4000, tau0=50, eta_cap=0.1))
        assert tr.final_mse <= 1e-8
        assert tr.final_consensus_error <= 1e-8

    def test_divergence_named(self, problem):
        with pytest.raises(DivergenceError) as err:
            # a tiny normaliser turns the capped step into a huge one
            run_gwf(problem, SolverConfig(t_max=50, init_norm=1e-8))
        assert err.value.iteration >= 1

    def test_phase_equivariance(self, sparse_problem):
        p = sparse_problem
        x0 = spectral_initialize(p.measurements, p.sampling, p.graph)
        rot = np.exp(0.7j)
        cfg = SolverConfig(t_max=50, tau0=20, eta_cap=0.2)
        a = run_dgwf(p, cfg, x0=x0)
        b = run_dgwf(p, cfg, x0=rot * x0)
        np.testing.assert_allclose(b.x, rot * a.x, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(b.mse, a.mse, rtol=1e-8, atol=1e-14)

    def test_callback_can_stop(self, problem):
        seen = []

        def cb(t, states, metrics):
            seen.append((t, metrics["mse"]))
            return t == 7

        tr = run_dgwf(problem, SolverConfig(t_max=100), callbacks=[cb])
        assert tr.stopped_early and tr.iterations == 7
        assert [t for t, _ in seen] == list(range(1, 8))

    def test_stop_at_mse(self):
        p = random_problem(num_agents=6, K=4, S=8, seed=1)
        tr = run_gwf(p, SolverConfig(t_max=5000, tau0=50, eta_cap=0.5), stop_at_mse=1e-4)
        assert tr.stopped_early and tr.final_mse <= 1e-4 < tr.mse[-2]

    def test_record_stride_keeps_last(self, problem):
        tr = run_gwf(problem, SolverConfig(t_max=25, record_every=10))
        assert tr.t.tolist() == [0, 10, 20, 25]
        assert np.all(np.diff(tr.t) > 0)
        assert len(tr.mse) == len(tr.consensus_error) == len(tr.eta) == len(tr.wall_time)

    def test_trace_csv_is_deterministic(self, problem, tmp_path):
        cfg = SolverConfig(t_max=40)
        run_dgwf(problem, cfg).to_csv(tmp_path / "a.csv")
        run_dgwf(problem, cfg).to_csv(tmp_path / "b.csv")
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes()
        assert a.splitlines()[0] == b"t,mse,consensus_error,eta"


def test_thin_indices():
    np.testing.assert_array_equal(thin_indices(5, 10), np.arange(5))
    idx = thin_indices(100_000, 1000)
    assert idx[0] == 0 and idx[-1] == 99_999 and len(idx) <= 1001
    assert np.all(np.diff(idx) > 0)
