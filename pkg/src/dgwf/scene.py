"""Multistatic radar forward model.

One transmitter illuminates a planar grid of voxels; ``N`` receivers
record the scattered field at ``S`` frequencies. Receivers never see the
scene directly, only cross-correlations of their own returns with a
neighbour's returns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .graph import AgentGraph

SPEED_OF_LIGHT = 299_792_458.0


class DegenerateGeometryError(ValueError):
    """A voxel sits on a transmitter or receiver (the spreading loss diverges)."""


class EmptyMeasurementError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SceneGeometry:
    tx_position: np.ndarray
    rx_positions: np.ndarray
    voxel_positions: np.ndarray
    grid_shape: tuple[int, int]
    voxel_spacing: float
    wave_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        tx = np.asarray(self.tx_position, dtype=float).reshape(3)
        rx = np.asarray(self.rx_positions, dtype=float).reshape(-1, 3)
        vox = np.asarray(self.voxel_positions, dtype=float).reshape(-1, 3)
        rows, cols = (int(v) for v in self.grid_shape)
        if rows * cols != len(vox):
            raise ValueError(f"grid {rows}x{cols} does not match {len(vox)} voxels")
        if not (np.isfinite(tx).all() and np.isfinite(rx).all() and np.isfinite(vox).all()):
            raise ValueError("positions must be finite")
        if len(np.unique(rx, axis=0)) != len(rx):
            raise ValueError("receiver positions must be pairwise distinct")
        if not self.wave_speed > 0:
            raise ValueError("wave speed must be positive")
        object.__setattr__(self, "tx_position", tx)
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "voxel_positions", vox)
        object.__setattr__(self, "grid_shape", (rows, cols))

    @property
    def num_receivers(self) -> int:
        return len(self.rx_positions)

    @property
    def num_voxels(self) -> int:
        return len(self.voxel_positions)

    @cached_property
    def rx_ranges(self) -> np.ndarray:
        """``(N, K)`` receiver-to-voxel distances."""
        return np.linalg.norm(self.voxel_positions[None] - self.rx_positions[:, None], axis=2)

    @cached_property
    def tx_ranges(self) -> np.ndarray:
        """``(K,)`` transmitter-to-voxel distances."""
        return np.linalg.norm(self.voxel_positions - self.tx_position, axis=1)


def grid_voxels(rows, cols, spacing, center=(0.0, 0.0, 0.0)):
    """Voxel centres of a ``rows x cols`` grid in the z = const plane, row-major."""
    r = (np.arange(rows) - (rows - 1) / 2) * spacing
    c = (np.arange(cols) - (cols - 1) / 2) * spacing
    yy, xx = np.meshgrid(r, c, indexing="ij")
    vox = np.stack([xx.ravel(), yy.ravel(), np.zeros(rows * cols)], axis=1)
    return vox + np.asarray(center, dtype=float)


def circular_geometry(
    num_receivers,
    radius,
    tx_position,
    rows=12,
    cols=12,
    spacing=2.4,
    wave_speed=SPEED_OF_LIGHT,
    start_angle=0.0,
) -> SceneGeometry:
    """Receivers evenly spaced on a circle around the grid, in the grid plane.

    ``start_angle`` (radians) rotates the whole ring; an offset that keeps
    receivers off the grid axes avoids redundant delay patterns.
    """
    theta = start_angle + 2 * np.pi * np.arange(num_receivers) / num_receivers
    rx = np.stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros(num_receivers)], axis=1)
    return SceneGeometry(
        tx_position=np.asarray(tx_position, dtype=float),
        rx_positions=rx,
        voxel_positions=grid_voxels(rows, cols, spacing),
        grid_shape=(rows, cols),
        voxel_spacing=spacing,
        wave_speed=wave_speed,
    )


@dataclass(frozen=True, eq=False)
class WaveformSpec:
    center_frequency: float
    bandwidth: float
    num_samples: int
    tx_gain_db: float = 0.0
    rx_gain_db: float = 0.0
    signal_power: np.ndarray | None = None

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("need at least one frequency sample")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.signal_power is not None:
            j = np.asarray(self.signal_power, dtype=complex).reshape(-1)
            if len(j) != self.num_samples:
                raise ValueError("signal_power needs one value per frequency sample")
            object.__setattr__(self, "signal_power", j)

    @property
    def frequencies(self) -> np.ndarray:
        """Uniform samples over the band, endpoints included (Hz)."""
        if self.num_samples == 1:
            return np.array([float(self.center_frequency)])
        half = self.bandwidth / 2
        return np.linspace(self.center_frequency - half, self.center_frequency + half, self.num_samples)

    @property
    def angular_frequencies(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies

    @property
    def spectrum(self) -> np.ndarray:
        if self.signal_power is None:
            return np.ones(self.num_samples, dtype=complex)
        return self.signal_power

    @property
    def gain(self) -> float:
        """Combined amplitude gain of both antennas."""
        return 10.0 ** ((self.tx_gain_db + self.rx_gain_db) / 20.0)


@dataclass(frozen=True, eq=False)
class ReflectivityImage:
    values: np.ndarray
    grid_shape: tuple[int, int]
    voxel_spacing: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if len(v) != self.grid_shape[0] * self.grid_shape[1]:
            raise ValueError("reflectivity length must equal rows * cols")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_scatterers(cls, grid_shape, voxel_spacing, scatterers) -> ReflectivityImage:
        """Build a scene from ``(row, col, amplitude)`` point scatterers."""
        rows, cols = grid_shape
        values = np.zeros(rows * cols, dtype=complex)
        for row, col, amp in scatterers:
            if not (0 <= row < rows and 0 <= col < cols):
                raise ValueError(f"scatterer ({row}, {col}) outside {rows}x{cols} grid")
            values[row * cols + col] += amp
        return cls(values, (rows, cols), voxel_spacing)

    def to_csv(self, path):
        write_image_csv(path, self.values, self.grid_shape)


def write_image_csv(path, values, grid_shape):
    rows, cols = grid_shape
    values = np.asarray(values).reshape(rows, cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for r in range(rows):
            for c in range(cols):
                z = values[r, c]
                w.writerow([r, c, repr(float(z.real)), repr(float(z.imag))])


@dataclass(frozen=True, eq=False)
class SamplingMatrix:
    """The ``S`` sampling vectors of one receiver, one per row."""

    agent_id: int
    rows: np.ndarray

    @property
    def shape(self):
        return self.rows.shape


def bistatic_delay(geometry: SceneGeometry, agent: int, voxel: int) -> float:
    """Propagation time transmitter -> voxel -> receiver ``agent`` (seconds)."""
    x = geometry.voxel_positions[voxel]
    path = np.linalg.norm(x - geometry.rx_positions[agent]) + np.linalg.norm(x - geometry.tx_position)
    return float(path / geometry.wave_speed)


def attenuation(geometry: SceneGeometry, waveform: WaveformSpec, agent: int) -> np.ndarray:
    """Free-space two-leg spreading loss times antenna gain, per voxel."""
    r_rx = geometry.rx_ranges[agent]
    r_tx = geometry.tx_ranges
    if np.any(r_rx <= 0) or np.any(r_tx <= 0):
        raise DegenerateGeometryError(f"voxel coincides with receiver {agent} or the transmitter")
    return waveform.gain / ((4 * np.pi * r_rx) * (4 * np.pi * r_tx))


def build_sampling_matrix(geometry: SceneGeometry, waveform: WaveformSpec, agent: int) -> SamplingMatrix:
    alpha = attenuation(geometry, waveform, agent)
    delay = (geometry.rx_ranges[agent] + geometry.tx_ranges) / geometry.wave_speed
    omega = waveform.angular_frequencies
    rows = waveform.spectrum[:, None] * alpha[None, :] * np.exp(-1j * omega[:, None] * delay[None, :])
    return SamplingMatrix(agent, rows)


def build_all_sampling(geometry: SceneGeometry, waveform: WaveformSpec) -> np.ndarray:
    """Sampling vectors of every receiver stacked as an ``(N, S, K)`` array."""
    return np.stack(
        [build_sampling_matrix(geometry, waveform, i).rows for i in range(geometry.num_receivers)]
    )


def stack_sampling(sampling) -> np.ndarray:
    if isinstance(sampling, np.ndarray):
        arr = sampling
    else:
        arr = np.stack([s.rows if isinstance(s, SamplingMatrix) else np.asarray(s) for s in sampling])
    if arr.ndim != 3:
        raise ValueError(f"expected (N, S, K) sampling array, got shape {arr.shape}")
    return arr.astype(complex, copy=False)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Cross-correlations ``d_ij^s`` for every graph edge.

    Only ``i < j`` is stored; the reverse direction is the complex
    conjugate and is produced on read.
    """

    edges: np.ndarray
    values: np.ndarray
    noise_sigma: float = 0.0
    snr_db: float = float("inf")

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or len(v) != len(e):
            raise ValueError("values must be (num_edges, S)")
        if np.any(e[:, 0] >= e[:, 1]):
            raise ValueError("edges must be stored with i < j")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.size

    @cached_property
    def _index(self) -> dict:
        return {(int(i), int(j)): n for n, (i, j) in enumerate(self.edges)}

    def edge_set(self) -> set:
        return set(self._index)

    def get(self, i: int, j: int) -> np.ndarray:
        """All ``S`` samples of ``d_ij``."""
        if i < j:
            return self.values[self._index[(i, j)]]
        return np.conj(self.values[self._index[(j, i)]])

    def __getitem__(self, key):
        i, j, s = key
        return self.get(i, j)[s]

    def __contains__(self, pair) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self._index

    def directed(self):
        """``(src, dst, values)`` over both directions, sorted by ``(src, dst)``."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        vals = np.concatenate([self.values, np.conj(self.values)])
        order = np.lexsort((dst, src))
        return src[order], dst[order], vals[order]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "s", "re", "im"])
            for (i, j), row in zip(self.edges.tolist(), self.values):
                for s, z in enumerate(row):
                    w.writerow([i, j, s, repr(float(z.real)), repr(float(z.imag))])

    @classmethod
    def from_csv(cls, path) -> MeasurementSet:
        entries = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                i, j, s = int(rec["i"]), int(rec["j"]), int(rec["s"])
                z = complex(float(rec["re"]), float(rec["im"]))
                if i > j:
                    i, j, z = j, i, z.conjugate()
                entries.setdefault((i, j), {})[s] = z
        edges = sorted(entries)
        num_samples = 1 + max(max(d) for d in entries.values())
        values = np.zeros((len(edges), num_samples), dtype=complex)
        for n, e in enumerate(edges):
            for s, z in entries[e].items():
                values[n, s] = z
        return cls(np.array(edges, dtype=np.int64), values)


def synthesize_measurements(sampling, truth, graph: AgentGraph) -> MeasurementSet:
    """Noiseless cross-correlations ``<a_i, rho> conj(<a_j, rho>)`` on every edge."""
    A = stack_sampling(sampling)
    if len(A) != graph.num_agents:
        raise ValueError(f"{len(A)} sampling matrices for {graph.num_agents} agents")
    if graph.num_edges == 0:
        raise EmptyMeasurementError("graph has no edges, so no cross-correlations exist")
    rho = truth.values if isinstance(truth, ReflectivityImage) else np.asarray(truth, dtype=complex)
    y = np.conj(A) @ rho  # (N, S), y_i^s = (a_i^s)^H rho
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return MeasurementSet(graph.edges, y[i] * np.conj(y[j]))


def add_noise(measurements: MeasurementSet, snr_db, rng_seed=None) -> MeasurementSet:
    """Add circular complex Gaussian noise at the given average-power SNR.

    ``snr_db = inf`` returns the input unchanged.
    """
    if measurements.size == 0:
        raise EmptyMeasurementError("cannot add noise to an empty measurement set")
    snr_db = float(snr_db)
    if np.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    if np.isposinf(snr_db):
        return measurements
    power = np.mean(np.abs(measurements.values) ** 2)
    variance = power * 10.0 ** (-snr_db / 10.0)
    sigma = np.sqrt(variance / 2.0)
    rng = np.random.default_rng(rng_seed)
    noise = sigma * (rng.standard_normal(measurements.values.shape) + 1j * rng.standard_normal(measurements.values.shape))
    return MeasurementSet(measurements.edges, measurements.values + noise, noise_sigma=float(sigma), snr_db=snr_db)


def snr_of(signal, noisy) -> float:
    """Realised SNR in dB of ``noisy`` relative to the clean ``signal``."""
    signal = np.asarray(signal)
    noise = np.asarray(noisy) - signal
    return float(10 * np.log10(np.mean(np.abs(signal) ** 2) / np.mean(np.abs(noise) ** 2)))
