"""Experiment configuration: a YAML tree with fixed field names.

Unknown keys are rejected at every level so that typos fail loudly
instead of silently falling back to a default.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


DEFAULT_SCATTERERS = [[3, 4, 1.0], [6, 6, 1.0], [8, 2, 1.0], [2, 9, 1.0], [9, 9, 1.0]]


@dataclass
class SceneConfig:
    rows: int = 12
    cols: int = 12
    spacing: float = 2.4
    # [row, col, amplitude] or [row, col, re, im]
    scatterers: list = field(default_factory=lambda: [list(s) for s in DEFAULT_SCATTERERS])
    receiver_radius: float = 1000.0
    start_angle: float = 0.5
    tx_position: list = field(default_factory=lambda: [0.0, 0.0, 81000.0])
    wave_speed: float = 299792458.0

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("scene.rows and scene.cols must be positive")
        if not self.spacing > 0 or not self.receiver_radius > 0:
            raise ConfigError("scene.spacing and scene.receiver_radius must be positive")
        if len(self.tx_position) != 3:
            raise ConfigError("scene.tx_position must have three coordinates")
        for s in self.scatterers:
            if len(s) not in (3, 4):
                raise ConfigError(f"scatterer {s!r} must be [row, col, amp] or [row, col, re, im]")
            if not (0 <= s[0] < self.rows and 0 <= s[1] < self.cols):
                raise ConfigError(f"scatterer {s!r} lies outside the {self.rows}x{self.cols} grid")

    def scatterer_tuples(self):
        out = []
        for s in self.scatterers:
            amp = complex(s[2]) if len(s) == 3 else complex(s[2], s[3])
            out.append((int(s[0]), int(s[1]), amp))
        return out


@dataclass
class WaveformConfig:
    center_frequency: float = 12e9
    bandwidth: float = 60e6
    num_samples: int = 64
    tx_gain_db: float = 100.0
    rx_gain_db: float = 100.0

    def validate(self):
        if self.num_samples < 1:
            raise ConfigError("waveform.num_samples must be at least 1")
        if not self.center_frequency > 0 or self.bandwidth < 0:
            raise ConfigError("waveform frequencies must be positive")


@dataclass
class GraphConfig:
    num_agents: int = 35
    kind: str = "small_world"
    connection_prob: float = 0.1
    base_degree: int = 4

    def validate(self):
        if self.kind not in ("small_world", "complete"):
            raise ConfigError(f"graph.kind must be 'small_world' or 'complete', got {self.kind!r}")
        if self.num_agents < 2:
            raise ConfigError("graph.num_agents must be at least 2")
        if not 0.0 <= self.connection_prob <= 1.0:
            raise ConfigError("graph.connection_prob must lie in [0, 1]")
        if self.base_degree < 2:
            raise ConfigError("graph.base_degree must be at least 2")


@dataclass
class SolverBlock:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau0: float = 3300.0
    eta_cap: float = 0.01
    t_max: int = 4000
    record_every: int = 1
    mse_threshold: float = 1e-5

    def validate(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("solver.lambda1 and solver.lambda2 must be non-negative")
        if not self.tau0 > 0 or not self.eta_cap > 0:
            raise ConfigError("solver.tau0 and solver.eta_cap must be positive")
        if self.t_max < 0 or self.record_every < 1:
            raise ConfigError("solver.t_max must be >= 0 and solver.record_every >= 1")


@dataclass
class NoiseConfig:
    snr_db: float | str = 50.0

    def validate(self):
        if isinstance(self.snr_db, str):
            if self.snr_db.lower() != "none":
                raise ConfigError("noise.snr_db must be a number or 'none'")
        elif not math.isfinite(float(self.snr_db)) and float(self.snr_db) != math.inf:
            raise ConfigError("noise.snr_db must be a number or 'none'")

    @property
    def snr(self) -> float:
        """SNR in dB; ``inf`` means noiseless."""
        if isinstance(self.snr_db, str):
            return math.inf
        return float(self.snr_db)


SWEEP_PARAMETERS = ("connection_prob", "num_agents")
DEFAULT_SWEEP_VALUES = {
    "connection_prob": [round(0.1 * k, 1) for k in range(1, 11)],
    "num_agents": list(range(5, 45, 5)),
}


@dataclass
class SweepConfig:
    parameter: str | None = None
    values: list | None = None
    seeds: int = 3
    # None: connectivity sweeps run to 1e5 and stop at the threshold,
    # receiver sweeps use solver.t_max
    t_max: int | None = None

    def validate(self):
        if self.parameter is not None and self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep.parameter must be one of {SWEEP_PARAMETERS}")
        if self.seeds < 1:
            raise ConfigError("sweep.seeds must be at least 1")
        if self.t_max is not None and self.t_max < 0:
            raise ConfigError("sweep.t_max must be non-negative")

    def resolved(self, parameter):
        """Values for ``parameter``, rejecting a config written for another sweep."""
        if self.parameter is not None and self.parameter != parameter:
            raise ConfigError(f"config sweeps {self.parameter!r}, not {parameter!r}")
        values = self.values if self.values is not None else DEFAULT_SWEEP_VALUES[parameter]
        if parameter == "connection_prob" and any(not 0.0 <= v <= 1.0 for v in values):
            raise ConfigError("connection probabilities must lie in [0, 1]")
        if parameter == "num_agents" and any(int(v) < 2 for v in values):
            raise ConfigError("receiver counts must be at least 2")
        return list(values)


@dataclass
class TheoryConfig:
    rows: int = 4
    cols: int = 4
    num_receivers: int = 8
    num_samples: int = 16
    scatterers: list = field(default_factory=lambda: [[1, 1, 1.0], [2, 3, 1.0], [3, 0, 1.0]])
    ric_trials: int = 500
    rc_samples: int = 500
    rc_radius: float = 0.1
    rc_split: float = 0.5
    lipschitz_pairs: int = 1000
    tau_factor: float = 4.0
    delta1: float | None = None

    def validate(self):
        if self.ric_trials < 1 or self.rc_samples < 1 or self.lipschitz_pairs < 1:
            raise ConfigError("theory sample counts must be positive")
        if not 0.0 < self.rc_split < 1.0:
            raise ConfigError("theory.rc_split must lie strictly between 0 and 1")
        if self.delta1 is not None and not 0.0 <= self.delta1 <= 0.214:
            raise ConfigError("theory.delta1 must lie in [0, 0.214]")


@dataclass
class OutputConfig:
    dir: str = "results"
    plots: bool = True
    max_records: int = 10_000


@dataclass
class ExperimentConfig:
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    solver: SolverBlock = field(default_factory=SolverBlock)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        for f in dataclasses.fields(self):
            block = getattr(self, f.name)
            if hasattr(block, "validate"):
                block.validate()
        return self

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        return _build(cls, data or {}, "").validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **blocks) -> "ExperimentConfig":
        """Copy with some blocks (or fields of blocks, given as dicts) replaced."""
        data = self.to_dict()
        for name, value in blocks.items():
            if isinstance(value, dict):
                data[name].update(value)
            else:
                data[name] = value
        return ExperimentConfig.from_dict(data)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if known[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def default_config_text() -> str:
    return dump_config(ExperimentConfig())
