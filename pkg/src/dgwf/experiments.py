"""Experiment drivers: single runs, parameter sweeps, theory and init reports.

Every run draws its randomness from a ``SeedSequence`` keyed by the master
seed and the run's seed index, split into independent graph, noise and
initialisation streams. A sweep point is therefore reproducible on its own,
and runs at different sweep values with the same seed index share streams.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .config import ExperimentConfig
from .graph import AgentGraph, complete_graph, small_world
from .metrics import consensus_error, iterations_to_threshold, mse_aligned
from .scene import (
    MeasurementSet,
    ReflectivityImage,
    SceneGeometry,
    WaveformSpec,
    add_noise,
    build_all_sampling,
    circular_geometry,
    synthesize_measurements,
    write_image_csv,
)
from .solvers import (
    DivergenceError,
    IterationTrace,
    Problem,
    SolverConfig,
    run_dgwf,
    run_gwf,
    spectral_initialize,
    thin_indices,
)

log = logging.getLogger(__name__)

NOT_REACHED = "not reached"
CONNECTIVITY_T_MAX = 100_000


# -- instances ----------------------------------------------------------------


def seed_streams(master_seed: int, run_seed: int) -> dict[str, np.random.SeedSequence]:
    graph, noise, init = np.random.SeedSequence(master_seed, spawn_key=(run_seed,)).spawn(3)
    return {"graph": graph, "noise": noise, "init": init}


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


@dataclass(eq=False)
class Instance:
    """One fully specified imaging problem plus the objects it was built from."""

    geometry: SceneGeometry
    waveform: WaveformSpec
    truth: ReflectivityImage
    graph: AgentGraph
    clean: MeasurementSet
    measurements: MeasurementSet
    problem: Problem
    init_seed: int

    def initial_image(self) -> np.ndarray:
        p = self.problem
        return spectral_initialize(p.measurements, p.sampling, p.graph, rng_seed=self.init_seed)


def make_waveform(config: ExperimentConfig, num_samples=None) -> WaveformSpec:
    w = config.waveform
    return WaveformSpec(
        w.center_frequency,
        w.bandwidth,
        num_samples or w.num_samples,
        tx_gain_db=w.tx_gain_db,
        rx_gain_db=w.rx_gain_db,
    )


def make_geometry(config: ExperimentConfig, num_agents, rows=None, cols=None) -> SceneGeometry:
    s = config.scene
    return circular_geometry(
        num_agents,
        s.receiver_radius,
        s.tx_position,
        rows=rows or s.rows,
        cols=cols or s.cols,
        spacing=s.spacing,
        wave_speed=s.wave_speed,
        start_angle=s.start_angle,
    )


def make_graph(config: ExperimentConfig, num_agents, connection_prob, seq, complete=False) -> AgentGraph:
    if complete or config.graph.kind == "complete":
        return complete_graph(num_agents)
    return small_world(num_agents, connection_prob, config.graph.base_degree, rng_seed=seq)


def build_instance(
    config: ExperimentConfig,
    seed: int = 0,
    num_agents: int | None = None,
    connection_prob: float | None = None,
    complete: bool = False,
    snr_db: float | None = None,
) -> Instance:
    """Assemble geometry, scene, graph and (noisy) measurements for one run.

    ``seed`` indexes the run within the master seed's streams. Overrides
    default to the config values; ``snr_db=inf`` gives noiseless data.
    """
    N = num_agents or config.graph.num_agents
    p = config.graph.connection_prob if connection_prob is None else connection_prob
    snr = config.noise.snr if snr_db is None else snr_db
    streams = seed_streams(config.seed, seed)
    geometry = make_geometry(config, N)
    waveform = make_waveform(config)
    truth = ReflectivityImage.from_scatterers(
        (config.scene.rows, config.scene.cols), config.scene.spacing, config.scene.scatterer_tuples()
    )
    graph = make_graph(config, N, p, streams["graph"], complete)
    sampling = build_all_sampling(geometry, waveform)
    clean = synthesize_measurements(sampling, truth, graph)
    measurements = add_noise(clean, snr, rng_seed=streams["noise"]) if math.isfinite(snr) else clean
    problem = Problem(sampling, measurements, graph, truth)
    return Instance(geometry, waveform, truth, graph, clean, measurements, problem, _int_seed(streams["init"]))


def solver_config(config: ExperimentConfig, t_max: int | None = None, record_every: int | None = None) -> SolverConfig:
    s = config.solver
    return SolverConfig(
        lambda1=s.lambda1,
        lambda2=s.lambda2,
        tau0=s.tau0,
        eta_cap=s.eta_cap,
        t_max=s.t_max if t_max is None else t_max,
        record_every=record_every or s.record_every,
    )


# -- Lyapunov monitor -----------------------------------------------------------


class LyapunovMonitor:
    """Callback recording ``||x - mean(x)||^2 + N (f(mean(x)) - f*)`` each round."""

    def __init__(self, problem: Problem, f_star: float = 0.0, every: int = 1):
        self.problem = problem
        self.f_star = f_star
        self.every = every
        self.t: list[int] = []
        self.values: list[float] = []

    def start(self, x0):
        self.t.append(0)
        self.values.append(self.problem.num_agents * (self.problem.objective(x0) - self.f_star))

    def __call__(self, t, states, metrics):
        if t % self.every:
            return None
        X = states.x
        mean = X.mean(axis=0)
        N = self.problem.num_agents
        self.t.append(t)
        self.values.append(consensus_error(X) + N * (self.problem.objective(mean) - self.f_star))
        return None


@dataclass(frozen=True)
class LogLinearFit:
    slope: float
    intercept: float
    r_squared: float
    num_points: int


def log_linear_fit(t, values) -> LogLinearFit:
    """Least-squares line through ``(t, log values)``."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if len(t) < 2:
        raise ValueError("need at least two points for a fit")
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return LogLinearFit(float(slope), float(intercept), r2, len(t))


def tail_fit(t, values, stop) -> LogLinearFit:
    """Fit over the last half of the iterations before ``stop``."""
    t = np.asarray(t)
    mask = (t >= stop / 2) & (t <= stop)
    return log_linear_fit(t[mask], np.asarray(values)[mask])


# -- plotting (best effort) ------------------------------------------------------


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as exc:  # pragma: no cover - depends on the environment
        log.warning("plotting disabled: %s", exc)
        return None
    return plt


def _save_plot(draw, path):
    plt = _pyplot()
    if plt is None:
        return None
    try:
        fig, axes = draw(plt)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    except Exception as exc:
        log.warning("could not write plot %s: %s", path, exc)
        return None
    return path


# -- simulate ---------------------------------------------------------------------


@dataclass
class SimulationResult:
    instance: Instance
    traces: dict[str, IterationTrace]
    lyapunov: LyapunovMonitor
    files: list[Path] = field(default_factory=list)


def simulate(config: ExperimentConfig, out_dir=None, seed: int = 0, t_max: int | None = None) -> SimulationResult:
    """One DGWF and one GWF run from a shared spectral start.

    Writes trace, reconstruction, graph and measurement CSVs when
    ``out_dir`` is given. The files depend only on config and seed.
    """
    inst = build_instance(config, seed)
    x0 = inst.initial_image()
    scfg = solver_config(config, t_max)
    monitor = LyapunovMonitor(inst.problem)
    monitor.start(x0)
    traces = {
        "dgwf": run_dgwf(inst.problem, scfg, x0=x0, callbacks=[monitor]),
        "gwf": run_gwf(inst.problem, scfg, x0=x0),
    }
    result = SimulationResult(inst, traces, monitor)
    if out_dir is not None:
        result.files = _write_simulation(config, result, Path(out_dir))
    return result


def _write_simulation(config, result: SimulationResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    inst = result.instance
    shape = inst.truth.grid_shape
    threshold = config.solver.mse_threshold
    files = []

    def add(path):
        files.append(path)
        return path

    for name, trace in result.traces.items():
        trace.to_csv(add(out / f"trace_{name}.csv"), max_records=config.output.max_records)
        write_image_csv(add(out / f"reconstruction_{name}.csv"), trace.estimate(), shape)
    inst.truth.to_csv(add(out / "truth.csv"))
    inst.graph.save_edgelist(add(out / "graph.edgelist"))
    inst.measurements.to_csv(add(out / "measurements.csv"))

    mon = result.lyapunov
    with open(add(out / "lyapunov_dgwf.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lyapunov"])
        for n in thin_indices(len(mon.t), config.output.max_records):
            w.writerow([mon.t[n], repr(float(mon.values[n]))])

    with open(add(out / "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "iterations_to_threshold", "final_mse", "final_consensus_error"])
        for name, trace in result.traces.items():
            hit = iterations_to_threshold(trace, threshold)
            w.writerow([name, NOT_REACHED if hit is None else hit, repr(trace.final_mse), repr(trace.final_consensus_error)])

    if config.output.plots:

        def draw(plt):
            fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
            for name, trace in result.traces.items():
                idx = thin_indices(len(trace.t), config.output.max_records)
                a.semilogy(trace.t[idx], trace.mse[idx], label=name.upper())
            a.set_xlabel("iteration")
            a.set_ylabel("MSE")
            a.legend()
            tr = result.traces["dgwf"]
            idx = thin_indices(len(tr.t), config.output.max_records)
            b.semilogy(tr.t[idx], np.maximum(tr.consensus_error[idx], 1e-300))
            b.set_xlabel("iteration")
            b.set_ylabel("consensus error")
            return fig, (a, b)

        if _save_plot(draw, out / "simulate.svg"):
            files.append(out / "simulate.svg")
    return files


# -- sweeps -------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    run_id: str
    solver: str
    seed: int
    value: float
    iterations: int | None
    final_mse: float
    final_consensus_error: float
    wall_time: float
    diverged: bool = False


@dataclass
class SweepResult:
    parameter: str
    values: list
    runs: list[RunSummary]
    traces: dict[str, IterationTrace] = field(default_factory=dict)

    def select(self, solver, value):
        return [r for r in self.runs if r.solver == solver and r.value == value]

    def median_iterations(self, solver) -> dict:
        """Median iterations-to-threshold per value; unreached runs count as ``inf``."""
        out = {}
        for v in self.values:
            its = [math.inf if r.iterations is None else r.iterations for r in self.select(solver, v)]
            out[v] = float(np.median(its))
        return out

    def mad_iterations(self, solver) -> dict:
        out = {}
        for v in self.values:
            its = np.array([math.inf if r.iterations is None else r.iterations for r in self.select(solver, v)], dtype=float)
            med = np.median(its)
            out[v] = float(np.median(np.abs(its - med))) if np.isfinite(med) else math.inf
        return out

    def median_final_mse(self, solver) -> dict:
        return {v: float(np.median([r.final_mse for r in self.select(solver, v)])) for v in self.values}


def _trace_rows(run_id, seed, value, trace: IterationTrace, max_records):
    for n in thin_indices(len(trace.t), max_records):
        yield [
            run_id,
            seed,
            value,
            int(trace.t[n]),
            repr(float(trace.mse[n])),
            repr(float(trace.consensus_error[n])),
            f"{trace.wall_time[n]:.6f}",
        ]


RUN_COLUMNS = ["run_id", "seed", "sweep_value", "iteration", "mse", "consensus_error", "wall_time"]
SUMMARY_COLUMNS = [
    "run_id",
    "solver",
    "seed",
    "sweep_value",
    "iterations_to_threshold",
    "final_mse",
    "final_consensus_error",
    "wall_time",
]


def _run_solver(name, run, problem, scfg, x0, threshold, stop):
    started = time.perf_counter()
    try:
        trace = run(problem, scfg, x0=x0, stop_at_mse=threshold if stop else None)
    except DivergenceError as exc:
        log.warning("%s diverged at iteration %d", name, exc.iteration)
        return None, time.perf_counter() - started
    return trace, time.perf_counter() - started


def _sweep_task(args):
    config, parameter, value, seed, solvers, t_max, stop, threshold = args
    kwargs = {"seed": seed}
    if parameter == "connection_prob":
        kwargs["connection_prob"] = value
    else:
        kwargs["num_agents"] = int(value)
    complete = solvers == ("gwf_cg",)
    inst = build_instance(config, complete=complete, **kwargs)
    x0 = inst.initial_image()
    scfg = solver_config(config, t_max)
    out = []
    for name in solvers:
        run = run_dgwf if name == "dgwf" else run_gwf
        trace, wall = _run_solver(name, run, inst.problem, scfg, x0, threshold, stop)
        run_id = f"{parameter}={value}_seed={seed}_{name}"
        if trace is None:
            out.append((RunSummary(run_id, name, seed, value, None, math.inf, math.inf, wall, True), None))
            continue
        hit = iterations_to_threshold(trace, threshold)
        summary = RunSummary(run_id, name, seed, value, hit, trace.final_mse, trace.final_consensus_error, wall)
        out.append((summary, trace))
    return out


def _execute(tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_task, tasks))
    return [_sweep_task(t) for t in tasks]


def run_connectivity_sweep(config: ExperimentConfig, out_dir=None, workers: int = 1, keep_traces=False) -> SweepResult:
    """Iterations to the MSE threshold versus the rewiring probability.

    DGWF and GWF run on each sampled graph; GWF on the complete graph runs
    once per seed (it does not depend on the probability) and is reported
    at every probability.
    """
    values = config.sweep.resolved("connection_prob")
    t_max = config.sweep.t_max if config.sweep.t_max is not None else CONNECTIVITY_T_MAX
    threshold = config.solver.mse_threshold
    seeds = range(config.sweep.seeds)
    tasks = [(config, "connection_prob", v, s, ("dgwf", "gwf"), t_max, True, threshold) for v in values for s in seeds]
    tasks += [(config, "connection_prob", 1.0, s, ("gwf_cg",), t_max, True, threshold) for s in seeds]
    results = _execute(tasks, workers)

    runs, traces = [], {}
    for batch in results:
        for summary, trace in batch:
            if summary.solver == "gwf_cg":
                # replicate across every probability for per-point comparison
                for v in values:
                    runs.append(_replace_value(summary, v))
            else:
                runs.append(summary)
            if trace is not None:
                traces[summary.run_id] = trace
    result = SweepResult("connection_prob", values, runs, traces if keep_traces else {})
    if out_dir is not None:
        _write_sweep(config, result, traces, Path(out_dir), "connectivity")
    return result


def _replace_value(summary: RunSummary, value) -> RunSummary:
    run_id = f"connection_prob=complete_seed={summary.seed}_gwf_cg"
    return RunSummary(
        run_id, summary.solver, summary.seed, value, summary.iterations,
        summary.final_mse, summary.final_consensus_error, summary.wall_time, summary.diverged,
    )


def run_receiver_sweep(config: ExperimentConfig, out_dir=None, workers: int = 1, keep_traces=False) -> SweepResult:
    """Final MSE of DGWF and GWF after a fixed budget versus the receiver count."""
    values = [int(v) for v in config.sweep.resolved("num_agents")]
    t_max = config.sweep.t_max if config.sweep.t_max is not None else config.solver.t_max
    threshold = config.solver.mse_threshold
    tasks = [
        (config, "num_agents", v, s, ("dgwf", "gwf"), t_max, False, threshold)
        for v in values
        for s in range(config.sweep.seeds)
    ]
    runs, traces = [], {}
    for batch in _execute(tasks, workers):
        for summary, trace in batch:
            runs.append(summary)
            if trace is not None:
                traces[summary.run_id] = trace
    result = SweepResult("num_agents", values, runs, traces if keep_traces else {})
    if out_dir is not None:
        _write_sweep(config, result, traces, Path(out_dir), "receivers")
    return result


def _fmt_iterations(it):
    return NOT_REACHED if it is None else it


def _write_sweep(config, result: SweepResult, traces, out: Path, label):
    out.mkdir(parents=True, exist_ok=True)
    run_dir = out / "runs"
    run_dir.mkdir(exist_ok=True)
    written = set()
    for r in result.runs:
        trace = traces.get(r.run_id) or traces.get(_original_id(r))
        if trace is None or r.run_id in written:
            continue
        written.add(r.run_id)
        with open(run_dir / f"{_safe(r.run_id)}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_COLUMNS)
            value = "complete" if r.solver == "gwf_cg" else r.value
            w.writerows(_trace_rows(r.run_id, r.seed, value, trace, config.output.max_records))

    with open(out / f"sweep_{label}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in result.runs:
            w.writerow(
                [
                    r.run_id,
                    r.solver,
                    r.seed,
                    r.value,
                    _fmt_iterations(r.iterations),
                    repr(r.final_mse),
                    repr(r.final_consensus_error),
                    f"{r.wall_time:.6f}",
                ]
            )

    solvers = sorted({r.solver for r in result.runs})
    if result.parameter == "connection_prob":
        stats = {s: result.median_iterations(s) for s in solvers}
        ylabel, log_y = "iterations to MSE threshold", False
    else:
        stats = {s: result.median_final_mse(s) for s in solvers}
        ylabel, log_y = "final MSE", True
    with open(out / f"sweep_{label}_medians.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([result.parameter] + solvers)
        for v in result.values:
            w.writerow([v] + [repr(stats[s][v]) for s in solvers])

    if config.output.plots:

        def draw(plt):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for s in solvers:
                ys = [stats[s][v] for v in result.values]
                (ax.semilogy if log_y else ax.plot)(result.values, ys, marker="o", label=s.upper().replace("_CG", "_cg"))
            ax.set_xlabel("connection probability" if result.parameter == "connection_prob" else "number of receivers")
            ax.set_ylabel(ylabel)
            ax.legend()
            return fig, ax

        _save_plot(draw, out / f"sweep_{label}.svg")


def _original_id(r: RunSummary):
    return f"connection_prob=1.0_seed={r.seed}_gwf_cg" if r.solver == "gwf_cg" else r.run_id


def _safe(run_id: str) -> str:
    return run_id.replace("=", "-").replace("/", "_")


# -- theory report ----------------------------------------------------------------


@dataclass
class SmallInstance:
    """Downscaled noiseless problem for the dense real-lift checks."""

    problem: Problem
    lift: theory.RealLift
    x0: np.ndarray


def build_small_instance(config: ExperimentConfig, normalized=False) -> SmallInstance:
    """Small complete-graph instance from the ``theory`` block.

    With ``normalized=True`` the scene has unit norm and the objective is
    rescaled to ``0.5 ||F(zz^H) - d||^2`` with ``F`` centred on an isometry
    over random rank-1 matrices, the setting the regularity constants
    refer to.
    """
    th = config.theory
    geometry = make_geometry(config, th.num_receivers, rows=th.rows, cols=th.cols)
    waveform = make_waveform(config, num_samples=th.num_samples)
    truth = ReflectivityImage.from_scatterers((th.rows, th.cols), config.scene.spacing, theory_scatterers(th))
    rho = truth.values
    if normalized:
        rho = rho / np.linalg.norm(rho)
    graph = complete_graph(th.num_receivers)
    sampling = build_all_sampling(geometry, waveform)
    problem = Problem(sampling, synthesize_measurements(sampling, rho, graph), graph, rho)
    lift = theory.RealLift.from_problem(problem)
    if normalized:
        op = theory.LiftedOperator.from_problem(problem, weights=2.0 * lift.weights)
        scale = theory.isometry_scale(op, th.ric_trials, rng_seed=config.seed)
        lift = theory.RealLift(lift.A_R, lift.A_I, lift.d_R, lift.d_I, lift.weights * scale)
    x0 = spectral_initialize(problem.measurements, problem.sampling, problem.graph, rng_seed=config.seed)
    return SmallInstance(problem, lift, x0)


def theory_scatterers(th):
    return [(int(s[0]), int(s[1]), complex(s[2]) if len(s) == 3 else complex(s[2], s[3])) for s in th.scatterers]


@dataclass
class TheoryReport:
    constants_zero: theory.RicConstants
    constants_limit: theory.RicConstants
    h_decreasing: bool
    ric_estimate: float
    ric_estimate_centred: float
    delta1_used: float
    constants_used: theory.RicConstants
    tau: float
    lipschitz: float
    lipschitz_worst_ratio: float
    lipschitz_violations: int
    lipschitz_pairs: int
    rc: theory.InequalityReport
    rc_halved_alpha: theory.InequalityReport
    rc_alpha_slack: float
    pl_mu: float
    pl: theory.InequalityReport

    def rows(self):
        c0, cl, cu = self.constants_zero, self.constants_limit, self.constants_used
        yield from [
            ("ric0_eps", c0.eps), ("ric0_delta2", c0.delta2), ("ric0_c", c0.c), ("ric0_h", c0.h),
            ("ric_limit_delta1", cl.delta1), ("ric_limit_eps", cl.eps), ("ric_limit_delta2", cl.delta2),
            ("ric_limit_c", cl.c), ("ric_limit_h", cl.h),
            ("h_strictly_decreasing", int(self.h_decreasing)),
            ("ric_estimate_raw", self.ric_estimate),
            ("ric_estimate_centred", self.ric_estimate_centred),
            ("delta1_used", self.delta1_used),
            ("h", cu.h), ("c", cu.c), ("alpha", cu.alpha), ("beta", cu.beta),
            ("tau", self.tau), ("lipschitz_bound", self.lipschitz),
            ("lipschitz_worst_ratio", self.lipschitz_worst_ratio),
            ("lipschitz_pairs", self.lipschitz_pairs),
            ("lipschitz_violations", self.lipschitz_violations),
            ("rc_samples", self.rc.samples), ("rc_violations", self.rc.violations),
            ("rc_worst_margin", self.rc.worst_margin),
            ("rc_halved_alpha_violations", self.rc_halved_alpha.violations),
            ("rc_halved_alpha_worst_margin", self.rc_halved_alpha.worst_margin),
            ("rc_alpha_slack", self.rc_alpha_slack),
            ("pl_mu", self.pl_mu), ("pl_samples", self.pl.samples),
            ("pl_violations", self.pl.violations), ("pl_worst_margin", self.pl.worst_margin),
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "value"])
            for k, v in self.rows():
                w.writerow([k, repr(v) if isinstance(v, float) else v])

    def to_text(self) -> str:
        lines = [f"{k:32s} {v:.6g}" if isinstance(v, float) else f"{k:32s} {v}" for k, v in self.rows()]
        return "\n".join(lines) + "\n"


def lipschitz_monte_carlo(lift: theory.RealLift, tau, L, pairs, rng):
    """Worst observed ``||grad(u) - grad(v)|| / ||u - v||`` over random pairs in the ball."""
    ball = theory.SetBound(tau)
    U = ball.sample(pairs, lift.dim, rng)
    V = ball.sample(pairs, lift.dim, rng)
    worst, violations = 0.0, 0
    for u, v in zip(U, V):
        ratio = np.linalg.norm(theory.real_gradient(u, lift) - theory.real_gradient(v, lift)) / np.linalg.norm(u - v)
        worst = max(worst, ratio)
        violations += ratio > L
    return float(worst), int(violations)


def rc_alpha_slack(grad, x_star, alpha, beta, samples) -> float:
    """Largest factor by which ``alpha`` may shrink before a sampled RC violation."""
    worst = math.inf
    for zt in samples:
        ref = theory.aligned_reference(zt, x_star)
        h = zt - ref
        g = grad(zt)
        gg = float(g @ g)
        if gg == 0:
            continue
        worst = min(worst, (float(g @ h) - float(h @ h) / beta) / (gg / alpha))
    return worst


def theory_report(config: ExperimentConfig) -> TheoryReport:
    th = config.theory
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, 1)))

    c0 = theory.ric_constants(0.0)
    cl = theory.ric_constants(theory.RIC_LIMIT)
    grid = np.linspace(0.0, theory.RIC_LIMIT, 100)
    hs = np.array([theory.ric_constants(d).h for d in grid])
    h_decreasing = bool(np.all(np.diff(hs) < 0))

    # Lipschitz bound on the instance as modelled
    raw = build_small_instance(config)
    tau = theory.SetBound.from_initial(raw.x0, th.tau_factor).tau
    L = theory.lipschitz_bound(raw.lift, tau)
    worst, violations = lipschitz_monte_carlo(raw.lift, tau, L, th.lipschitz_pairs, rng)

    # RC / PL on the normalised instance
    norm = build_small_instance(config, normalized=True)
    op = theory.LiftedOperator.from_problem(norm.problem, weights=2.0 * norm.lift.weights)
    ric_raw = theory.estimate_ric_rank1(op, th.ric_trials, rng_seed=config.seed)
    ratios = theory.rank1_ratios(op, th.ric_trials, rng_seed=config.seed)
    ric_centred = float((ratios.max() - ratios.min()) / (ratios.max() + ratios.min()))
    delta1 = th.delta1 if th.delta1 is not None else min(ric_raw, theory.RIC_LIMIT)
    x_star = norm.problem.truth
    consts = theory.ric_constants(delta1, float(np.linalg.norm(x_star)), th.rc_split)
    samples = theory.ball_samples(x_star, th.rc_radius * np.linalg.norm(x_star), th.rc_samples, rng)
    grad = lambda z: theory.real_gradient(z, norm.lift)
    fun = lambda z: theory.real_objective(z, norm.lift)
    rc = theory.check_rc(grad, x_star, consts.alpha, consts.beta, samples)
    rc_half = theory.check_rc(grad, x_star, consts.alpha / 2, consts.beta, samples)
    slack = rc_alpha_slack(grad, x_star, consts.alpha, consts.beta, samples)
    tau_n = theory.SetBound.from_initial(norm.x0, th.tau_factor).tau
    L_n = theory.lipschitz_bound(norm.lift, tau_n)
    mu = theory.pl_constant(consts.beta, L_n)
    pl = theory.check_pl(fun, grad, 0.0, mu, samples)

    return TheoryReport(
        c0, cl, h_decreasing, ric_raw, ric_centred, delta1, consts, tau, L, worst, violations,
        th.lipschitz_pairs, rc, rc_half, slack, mu, pl,
    )


def write_theory_report(config: ExperimentConfig, out_dir) -> TheoryReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = theory_report(config)
    report.to_csv(out / "theory_report.csv")
    (out / "theory_report.txt").write_text(report.to_text())
    return report


# -- init-only report ----------------------------------------------------------------


@dataclass(frozen=True)
class InitQuality:
    seed: int
    spectral_error: float
    random_error: float
    spectral_mse: float
    eigenvalue_positive: bool


def relative_error(estimate, truth) -> float:
    return float(math.sqrt(mse_aligned(estimate, truth) * truth.size) / np.linalg.norm(truth))


def init_report(config: ExperimentConfig, out_dir=None, seeds: int | None = None) -> list[InitQuality]:
    """Spectral start versus a random unit-norm start, per seed."""
    rows = []
    for seed in range(seeds or config.sweep.seeds):
        inst = build_instance(config, seed)
        x0 = inst.initial_image()
        rng = np.random.default_rng(seed_streams(config.seed, seed)["init"])
        K = inst.problem.num_voxels
        r = rng.standard_normal(K) + 1j * rng.standard_normal(K)
        r /= np.linalg.norm(r)
        truth = inst.truth.values
        rows.append(
            InitQuality(seed, relative_error(x0, truth), relative_error(r, truth), mse_aligned(x0, truth), bool(np.any(x0)))
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "init_report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "spectral_relative_error", "random_relative_error", "spectral_mse", "nonzero"])
            for q in rows:
                w.writerow([q.seed, repr(q.spectral_error), repr(q.random_error), repr(q.spectral_mse), int(q.eigenvalue_positive)])
    return rows
