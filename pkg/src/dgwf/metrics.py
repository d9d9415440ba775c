"""Reconstruction-quality metrics."""

import numpy as np


def align_phase(estimate, truth):
    """Rotate ``estimate`` by the global phase that best matches ``truth``.

    The bilinear measurements cannot see a global phase, so any comparison
    with the ground truth must remove it first. A zero inner product
    leaves the estimate unrotated.
    """
    estimate = np.asarray(estimate, dtype=complex)
    ip = np.vdot(estimate, truth)
    if ip == 0:
        return estimate
    return estimate * (ip / abs(ip))


def mse_aligned(estimate, truth) -> float:
    estimate = np.asarray(estimate, dtype=complex)
    truth = np.asarray(truth, dtype=complex)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    diff = align_phase(estimate, truth) - truth
    return float(np.sum(diff.real**2 + diff.imag**2) / truth.size)


def agent_mse(X, truth) -> np.ndarray:
    """Phase-aligned MSE of every row of ``X`` against ``truth``."""
    X = np.asarray(X, dtype=complex)
    ip = X.conj() @ truth
    mag = np.abs(ip)
    rot = np.where(mag > 0, ip / np.where(mag > 0, mag, 1.0), 1.0)
    diff = X * rot[:, None] - truth
    return np.sum(diff.real**2 + diff.imag**2, axis=1) / X.shape[1]


def consensus_error(X) -> float:
    """Total squared distance of agent iterates from their mean."""
    X = np.asarray(X)
    if X.ndim == 1:
        return 0.0
    diff = X - X.mean(axis=0)
    return float(np.sum(diff.real**2 + diff.imag**2))


def iterations_to_threshold(trace_or_mse, threshold, iterations=None):
    """First iteration whose MSE is at or below ``threshold``.

    Accepts an :class:`~dgwf.solvers.IterationTrace` or a plain MSE
    sequence (then ``iterations`` defaults to ``0, 1, 2, ...``). Returns
    ``None`` if the threshold is never reached.
    """
    if hasattr(trace_or_mse, "mse"):
        mse = np.asarray(trace_or_mse.mse)
        iterations = trace_or_mse.t
    else:
        mse = np.asarray(trace_or_mse, dtype=float)
    if iterations is None:
        iterations = np.arange(len(mse))
    hits = np.flatnonzero(mse <= threshold)
    if len(hits) == 0:
        return None
    return int(np.asarray(iterations)[hits[0]])
