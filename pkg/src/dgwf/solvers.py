"""Spectral initialisation, DGWF and the centralised GWF baseline.

Every agent ``i`` keeps a primal image ``x_i`` and a dual image ``v_i``.
One synchronous round reads only time-``t`` neighbour values:

    x_i <- x_i - s (lam1 sum_j L_ij x_j + lam2 v_i + grad f_i(x_i))
    v_i <- v_i + s lam2 sum_j L_ij x_j,          s = eta_t / ||x_0||.

The centralised baseline runs plain gradient descent on the network
average ``(1/N) sum_i f_i`` over the same edge-restricted measurements.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .graph import AgentGraph, laplacian_apply
from .kernels import GradientKernel
from .metrics import agent_mse, consensus_error, mse_aligned
from .scene import EmptyMeasurementError, MeasurementSet, ReflectivityImage, stack_sampling


class DivergenceError(RuntimeError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


def step_schedule(t, tau0=3300.0, cap=0.01) -> float:
    """Warm-up step size ``min(1 - exp(-t / tau0), cap)``."""
    if tau0 <= 0 or cap <= 0:
        raise ValueError("tau0 and cap must be positive")
    return min(1.0 - math.exp(-t / tau0), cap)


@dataclass(frozen=True)
class SolverConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau0: float = 3300.0
    eta_cap: float = 0.01
    t_max: int = 4000
    record_every: int = 1
    init_norm: float | None = None

    def __post_init__(self):
        # zero penalties are allowed: they decouple the agents
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.tau0 <= 0 or self.eta_cap <= 0:
            raise ValueError("tau0 and eta_cap must be positive")
        if self.t_max < 0 or self.record_every < 1:
            raise ValueError("t_max must be >= 0 and record_every >= 1")
        if self.init_norm is not None and not self.init_norm > 0:
            raise ValueError("init_norm must be positive")

    def eta(self, t) -> float:
        return step_schedule(t, self.tau0, self.eta_cap)


@dataclass
class AgentState:
    agent_id: int
    x: np.ndarray
    v: np.ndarray

    @classmethod
    def initial(cls, agent_id, x0) -> AgentState:
        x0 = np.array(x0, dtype=complex)
        return cls(agent_id, x0, np.zeros_like(x0))


class SolverStates(NamedTuple):
    x: np.ndarray
    v: np.ndarray | None


@dataclass(eq=False)
class Problem:
    """Sampling vectors, graph and measurements of one imaging instance."""

    sampling: np.ndarray
    measurements: MeasurementSet
    graph: AgentGraph
    truth: np.ndarray | None = None
    backend: str | None = None

    def __post_init__(self):
        self.sampling = stack_sampling(self.sampling)
        if len(self.sampling) != self.graph.num_agents:
            raise ValueError(f"{len(self.sampling)} sampling matrices for {self.graph.num_agents} agents")
        if self.graph.num_edges == 0 or self.measurements.num_edges == 0:
            raise EmptyMeasurementError("problem has no cross-correlation measurements")
        if self.measurements.edge_set() != {tuple(e) for e in self.graph.edges.tolist()}:
            raise ValueError("measurement edges differ from graph edges")
        if self.measurements.num_samples != self.sampling.shape[1]:
            raise ValueError("measurement and sampling frequency counts differ")
        if isinstance(self.truth, ReflectivityImage):
            self.truth = self.truth.values
        elif self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=complex)

    @property
    def num_agents(self) -> int:
        return self.graph.num_agents

    @property
    def num_samples(self) -> int:
        return self.sampling.shape[1]

    @property
    def num_voxels(self) -> int:
        return self.sampling.shape[2]

    @cached_property
    def directed(self):
        return self.measurements.directed()

    @cached_property
    def kernel(self) -> GradientKernel:
        src, dst, data = self.directed
        return GradientKernel(self.sampling, src, dst, data, backend=self.backend)

    def objective(self, x) -> float:
        """Network objective ``(1/N) sum_i f_i(x)``."""
        src, dst, data = self.directed
        y = np.conj(self.sampling) @ np.asarray(x, dtype=complex)
        r = y[src] * np.conj(y[dst]) - data
        per_edge = np.sum(r.real**2 + r.imag**2, axis=1)
        return float(np.sum(self.kernel.scale[src] * per_edge) / self.num_agents)

    def local_objective(self, agent, x) -> float:
        A = self.sampling
        yi = np.conj(A[agent]) @ x
        total = 0.0
        nbrs = self.graph.neighbors[agent]
        for j in nbrs:
            r = yi * np.conj(np.conj(A[j]) @ x) - self.measurements.get(agent, int(j))
            total += np.sum(r.real**2 + r.imag**2)
        return float(total / (2 * len(nbrs) * self.num_samples))


# -- spectral initialisation -------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiftedBackprojection:
    matrix: np.ndarray
    eigenvalue: float
    eigenvector: np.ndarray

    @property
    def estimate(self) -> np.ndarray:
        """Rank-1 PSD factor ``sqrt(lambda_0) v_0``; zero if ``lambda_0 <= 0``."""
        return math.sqrt(max(self.eigenvalue, 0.0)) * self.eigenvector


def backprojection_matrix(measurements: MeasurementSet, sampling, graph: AgentGraph) -> np.ndarray:
    """Average of the agents' local lifted backprojections (Hermitian ``K x K``)."""
    A = stack_sampling(sampling)
    N, S, K = A.shape
    if measurements.num_edges == 0:
        raise EmptyMeasurementError("no measurements to backproject")
    X = np.zeros((K, K), dtype=complex)
    for i in range(N):
        nbrs = graph.neighbors[i]
        if len(nbrs) == 0:
            continue
        B = np.zeros((S, K), dtype=complex)
        for j in nbrs:
            B += measurements.get(i, int(j))[:, None] * np.conj(A[j])
        M = A[i].T @ B  # sum_s d_ij^s a_i^s (a_j^s)^H
        X += (M + M.conj().T) / (2 * len(nbrs) * S)
    return X / N


def leading_eigenpair(M, rng_seed=0, tol=1e-10, max_iters=5000):
    """Largest algebraic eigenpair of a Hermitian matrix by power iteration.

    Plain power iteration finds the eigenvalue of largest magnitude; if that
    one is negative the matrix is shifted by its magnitude and the iteration
    repeated, which makes the largest algebraic eigenvalue dominant.
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    rng = np.random.default_rng(rng_seed)
    start = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    start /= np.linalg.norm(start)

    def iterate(shift):
        v = start
        lam_prev = None
        for _ in range(max_iters):
            w = M @ v + shift * v
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                return 0.0, v
            lam = float(np.real(np.vdot(v, w)))
            v = w / nrm
            if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
                return lam - shift, v
            lam_prev = lam
        residual = float(np.linalg.norm(M @ v - (lam - shift) * v))
        raise ConvergenceError(f"power iteration did not converge in {max_iters} iterations", residual)

    lam, v = iterate(0.0)
    if lam < 0:
        lam, v = iterate(-lam)
    return lam, v


def lifted_backprojection(measurements, sampling, graph, rng_seed=0, tol=1e-10, max_iters=5000):
    M = backprojection_matrix(measurements, sampling, graph)
    lam, v = leading_eigenpair(M, rng_seed=rng_seed, tol=tol, max_iters=max_iters)
    return LiftedBackprojection(M, lam, v)


def spectral_initialize(measurements, sampling, graph, rng_seed=0, tol=1e-10, max_iters=5000):
    """Initial image from the leading eigenpair of the lifted backprojection."""
    lb = lifted_backprojection(measurements, sampling, graph, rng_seed, tol, max_iters)
    if lb.eigenvalue < 0:
        warnings.warn(
            f"leading eigenvalue {lb.eigenvalue:.3e} is negative; using a zero initial image",
            RuntimeWarning,
            stacklevel=2,
        )
    return lb.estimate


def lifted_forward(sampling, edges, X) -> np.ndarray:
    """Lifted model ``(a_i^s)^H X a_j^s`` for each edge ``(i, j)`` and sample ``s``.

    ``X = x x^H`` reproduces the cross-correlations of ``x``.
    """
    A = stack_sampling(sampling)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    left = np.conj(A[edges[:, 0]])  # (E, S, K)
    return np.einsum("esk,kl,esl->es", left, X, A[edges[:, 1]])


# -- gradients and update rules -----------------------------------------------


def local_wirtinger_gradient(agent, x, sampling, measurements: MeasurementSet, graph: AgentGraph):
    """Wirtinger gradient of ``f_agent`` written directly from its formula.

    Deliberately independent of :mod:`dgwf.kernels`; used as the reference
    path in :func:`stacked_step`.
    """
    A = stack_sampling(sampling)
    nbrs = graph.neighbors[agent]
    if len(nbrs) == 0:
        raise ValueError(f"agent {agent} has no neighbours")
    x = np.asarray(x, dtype=complex)
    yi = np.conj(A[agent]) @ x
    g = np.zeros_like(x)
    for j in nbrs:
        yj = np.conj(A[j]) @ x
        e = yi * np.conj(yj) - measurements.get(agent, int(j))
        g += (np.conj(e) * yi) @ A[j] + (e * yj) @ A[agent]
    return g / (2 * len(nbrs) * A.shape[1])


def _neighbour_laplacian(problem: Problem, X):
    # sum_j L_ij x_j = deg_i x_i - sum_{j in N_i} x_j, gathered from neighbours
    kernel = problem.kernel
    gathered = np.add.reduceat(X[kernel.dst], kernel.indptr[:-1], axis=0)
    degree = np.diff(kernel.indptr)
    return degree[:, None] * X - gathered


def _dgwf_round(problem, X, V, step, lambda1, lambda2):
    LX = _neighbour_laplacian(problem, X)
    G = problem.kernel.agent_gradients(X)
    return X - step * (lambda1 * LX + lambda2 * V + G), V + (step * lambda2) * LX


def _check_norm(x0_norm):
    if not x0_norm > 0:
        raise ValueError("initial image norm is zero; the step normaliser is undefined")


def dgwf_step(states: Sequence[AgentState], problem: Problem, config: SolverConfig, t: int, x0_norm: float):
    """One synchronous DGWF round over all agents."""
    _check_norm(x0_norm)
    if [s.agent_id for s in states] != list(range(problem.num_agents)):
        raise ValueError("states must be ordered by agent id and cover every agent")
    X = np.stack([s.x for s in states]).astype(complex)
    V = np.stack([s.v for s in states]).astype(complex)
    step = config.eta(t) / x0_norm
    X1, V1 = _dgwf_round(problem, X, V, step, config.lambda1, config.lambda2)
    return [AgentState(i, X1[i], V1[i]) for i in range(problem.num_agents)]


def stacked_step(x, v, problem: Problem, config: SolverConfig, t: int, x0_norm: float):
    """DGWF update on stacked ``(N*K,)`` vectors, via the reference gradient."""
    _check_norm(x0_norm)
    N, K = problem.num_agents, problem.num_voxels
    x = np.asarray(x, dtype=complex).reshape(N * K)
    v = np.asarray(v, dtype=complex).reshape(N * K)
    Lx = laplacian_apply(problem.graph, x)
    grad = np.concatenate(
        [
            local_wirtinger_gradient(i, x[i * K : (i + 1) * K], problem.sampling, problem.measurements, problem.graph)
            for i in range(N)
        ]
    )
    step = config.eta(t) / x0_norm
    return x - step * (config.lambda1 * Lx + config.lambda2 * v + grad), v + step * config.lambda2 * Lx


# -- drivers ------------------------------------------------------------------


@dataclass
class IterationTrace:
    solver: str
    t: np.ndarray
    mse: np.ndarray
    consensus_error: np.ndarray
    eta: np.ndarray
    x0: np.ndarray
    x: np.ndarray
    v: np.ndarray | None = None
    stopped_early: bool = False
    wall_time: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def final_mse(self) -> float:
        return float(self.mse[-1])

    @property
    def final_consensus_error(self) -> float:
        return float(self.consensus_error[-1])

    @property
    def iterations(self) -> int:
        return int(self.t[-1])

    def estimate(self) -> np.ndarray:
        """Agent-average image (the single shared image for GWF)."""
        return self.x if self.x.ndim == 1 else self.x.mean(axis=0)

    def to_csv(self, path, max_records=10_000):
        idx = thin_indices(len(self.t), max_records)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mse", "consensus_error", "eta"])
            for n in idx:
                w.writerow(
                    [int(self.t[n]), repr(float(self.mse[n])), repr(float(self.consensus_error[n])), repr(float(self.eta[n]))]
                )


def thin_indices(n, max_records=10_000) -> np.ndarray:
    """All indices when ``n <= max_records``, else log-spaced ones plus the last."""
    if n <= max_records:
        return np.arange(n)
    idx = np.unique(np.round(np.geomspace(1, n, max_records)).astype(np.int64) - 1)
    return np.union1d(np.r_[0, idx], [n - 1])


class _Recorder:
    def __init__(self, t_max, every, truth):
        size = t_max // every + 2
        self.t = np.empty(size, dtype=np.int64)
        self.mse = np.empty(size)
        self.cons = np.empty(size)
        self.eta = np.empty(size)
        self.wall = np.empty(size)
        self.start = time.perf_counter()
        self.n = 0
        self.every = every
        self.truth = truth

    def metrics(self, X):
        if self.truth is None:
            mse = float("nan")
        elif X.ndim == 1:
            mse = mse_aligned(X, self.truth)
        else:
            mse = float(np.mean(agent_mse(X, self.truth)))
        return {"mse": mse, "consensus_error": consensus_error(X)}

    def record(self, t, m, eta):
        n = self.n
        self.t[n], self.mse[n], self.cons[n], self.eta[n] = t, m["mse"], m["consensus_error"], eta
        self.wall[n] = time.perf_counter() - self.start
        self.n += 1

    def trace(self, solver, x0, X, V, stopped):
        n = self.n
        return IterationTrace(
            solver,
            self.t[:n].copy(),
            self.mse[:n].copy(),
            self.cons[:n].copy(),
            self.eta[:n].copy(),
            x0,
            X,
            V,
            stopped,
            self.wall[:n].copy(),
        )


Callback = Callable[[int, SolverStates, dict], "bool | None"]


def _resolve_init(problem, x0, rng_seed):
    if x0 is None:
        x0 = spectral_initialize(problem.measurements, problem.sampling, problem.graph, rng_seed=rng_seed)
    return np.asarray(x0, dtype=complex)


def _run(solver, problem, config, x0, callbacks, stop_at_mse, advance, X, V):
    rec = _Recorder(config.t_max, config.record_every, problem.truth)
    m = rec.metrics(X)
    rec.record(0, m, config.eta(0))
    stopped = False
    for t in range(config.t_max):
        X, V = advance(t, X, V)
        if not np.all(np.isfinite(X)):
            raise DivergenceError(t + 1)
        m = rec.metrics(X)
        done = t + 1 == config.t_max
        halt = any(bool(cb(t + 1, SolverStates(X, V), m)) for cb in callbacks)
        if stop_at_mse is not None and m["mse"] <= stop_at_mse:
            halt = True
        if halt or done or (t + 1) % config.record_every == 0:
            rec.record(t + 1, m, config.eta(t + 1))
        if halt:
            stopped = not done
            break
    return rec.trace(solver, x0, X, V, stopped)


def run_dgwf(
    problem: Problem,
    config: SolverConfig,
    x0=None,
    callbacks: Sequence[Callback] = (),
    stop_at_mse: float | None = None,
    rng_seed=0,
) -> IterationTrace:
    """Run DGWF from the broadcast initial image for ``config.t_max`` rounds.

    ``x0`` defaults to the spectral initialisation. Callbacks receive
    ``(t, states, metrics)`` after every round and may return ``True`` to
    stop. ``stop_at_mse`` stops as soon as the mean agent MSE reaches it.
    """
    x0 = _resolve_init(problem, x0, rng_seed)
    x0_norm = config.init_norm or float(np.linalg.norm(x0))
    _check_norm(x0_norm)
    X = np.tile(x0, (problem.num_agents, 1))
    V = np.zeros_like(X)

    def advance(t, X, V):
        return _dgwf_round(problem, X, V, config.eta(t) / x0_norm, config.lambda1, config.lambda2)

    return _run("dgwf", problem, config, x0, callbacks, stop_at_mse, advance, X, V)


def run_gwf(
    problem: Problem,
    config: SolverConfig,
    x0=None,
    callbacks: Sequence[Callback] = (),
    stop_at_mse: float | None = None,
    rng_seed=0,
) -> IterationTrace:
    """Centralised generalized Wirtinger flow on the network objective."""
    x0 = _resolve_init(problem, x0, rng_seed)
    x0_norm = config.init_norm or float(np.linalg.norm(x0))
    _check_norm(x0_norm)
    kernel = problem.kernel

    def advance(t, x, _):
        return x - (config.eta(t) / x0_norm) * kernel.mean_gradient(x), None

    return _run("gwf", problem, config, x0, callbacks, stop_at_mse, advance, x0.copy(), None)
