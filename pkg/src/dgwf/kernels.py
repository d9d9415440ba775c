"""Hot loops: local Wirtinger gradients of every agent.

Agent ``i`` owns the objective

    f_i(x) = c_i * sum_{j in N_i} sum_s |d_ij^s - (a_i^s)^H x x^H a_j^s|^2,
    c_i = 1 / (2 |N_i| S),

and its gradient is evaluated from inner products only; no ``K x K``
outer product is formed. Both backends compute the same quantity; the
numba one is used unless ``DGWF_DISABLE_JIT`` is set.
"""

import numpy as np

from . import _accel


@_accel.njit
def _agent_gradients_jit(Ar, Ai, Xr, Xi, indptr, dst, Dr, Di, scale):
    # real/imag split so the k-loops vectorise
    N, S, K = Ar.shape
    out_r = np.zeros((N, K))
    out_i = np.zeros((N, K))
    yr = np.empty(S)
    yi = np.empty(S)
    self_r = np.empty(S)
    self_i = np.empty(S)
    for i in range(N):
        xr = Xr[i]
        xi = Xi[i]
        gr = out_r[i]
        gi = out_i[i]
        for s in range(S):
            ar = Ar[i, s]
            ai = Ai[i, s]
            acc_r = 0.0
            acc_i = 0.0
            for k in range(K):
                acc_r += ar[k] * xr[k] + ai[k] * xi[k]
                acc_i += ar[k] * xi[k] - ai[k] * xr[k]
            yr[s] = acc_r
            yi[s] = acc_i
            self_r[s] = 0.0
            self_i[s] = 0.0
        for e in range(indptr[i], indptr[i + 1]):
            j = dst[e]
            for s in range(S):
                ar = Ar[j, s]
                ai = Ai[j, s]
                br = 0.0
                bi = 0.0
                for k in range(K):
                    br += ar[k] * xr[k] + ai[k] * xi[k]
                    bi += ar[k] * xi[k] - ai[k] * xr[k]
                # err = y_i conj(y_j) - d
                er = yr[s] * br + yi[s] * bi - Dr[e, s]
                ei = yi[s] * br - yr[s] * bi - Di[e, s]
                # conj(err) y_i multiplies a_j; err y_j multiplies a_i
                wr = er * yr[s] + ei * yi[s]
                wi = er * yi[s] - ei * yr[s]
                self_r[s] += er * br - ei * bi
                self_i[s] += er * bi + ei * br
                for k in range(K):
                    gr[k] += wr * ar[k] - wi * ai[k]
                    gi[k] += wr * ai[k] + wi * ar[k]
        for s in range(S):
            wr = self_r[s]
            wi = self_i[s]
            ar = Ar[i, s]
            ai = Ai[i, s]
            for k in range(K):
                gr[k] += wr * ar[k] - wi * ai[k]
                gi[k] += wr * ai[k] + wi * ar[k]
        c = scale[i]
        for k in range(K):
            gr[k] *= c
            gi[k] *= c
    return out_r, out_i


@_accel.njit
def _mean_gradient_jit(Ar, Ai, xr, xi, src, dst, Dr, Di, scale):
    N, S, K = Ar.shape
    yr = np.empty((N, S))
    yi = np.empty((N, S))
    for m in range(N):
        for s in range(S):
            ar = Ar[m, s]
            ai = Ai[m, s]
            acc_r = 0.0
            acc_i = 0.0
            for k in range(K):
                acc_r += ar[k] * xr[k] + ai[k] * xi[k]
                acc_i += ar[k] * xi[k] - ai[k] * xr[k]
            yr[m, s] = acc_r
            yi[m, s] = acc_i
    Wr = np.zeros((N, S))
    Wi = np.zeros((N, S))
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        c = scale[i]
        for s in range(S):
            er = yr[i, s] * yr[j, s] + yi[i, s] * yi[j, s] - Dr[e, s]
            ei = yi[i, s] * yr[j, s] - yr[i, s] * yi[j, s] - Di[e, s]
            Wr[j, s] += c * (er * yr[i, s] + ei * yi[i, s])
            Wi[j, s] += c * (er * yi[i, s] - ei * yr[i, s])
            Wr[i, s] += c * (er * yr[j, s] - ei * yi[j, s])
            Wi[i, s] += c * (er * yi[j, s] + ei * yr[j, s])
    gr = np.zeros(K)
    gi = np.zeros(K)
    for m in range(N):
        for s in range(S):
            wr = Wr[m, s]
            wi = Wi[m, s]
            ar = Ar[m, s]
            ai = Ai[m, s]
            for k in range(K):
                gr[k] += wr * ar[k] - wi * ai[k]
                gi[k] += wr * ai[k] + wi * ar[k]
    return gr / N, gi / N


class GradientKernel:
    """Local-gradient evaluator bound to one problem instance.

    Parameters
    ----------
    A : ndarray, shape (N, S, K)
        Sampling vectors of every agent.
    src, dst : ndarray of int
        Directed edges (both orientations), sorted by ``src``.
    data : ndarray, shape (len(src), S)
        ``d_{src,dst}`` for every directed edge.
    backend : {"numba", "numpy"}, optional
        Defaults to numba unless disabled through the environment.
    """

    def __init__(self, A, src, dst, data, backend=None):
        self.A = np.ascontiguousarray(A, dtype=np.complex128)
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.dst = np.ascontiguousarray(dst, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.complex128)
        N, S, _ = self.A.shape
        if np.any(np.diff(self.src) < 0):
            raise ValueError("directed edges must be sorted by source")
        self.indptr = np.searchsorted(self.src, np.arange(N + 1)).astype(np.int64)
        degree = np.diff(self.indptr)
        if np.any(degree == 0):
            isolated = np.flatnonzero(degree == 0).tolist()
            raise ValueError(f"agents {isolated} have no neighbours")
        self.scale = 1.0 / (2.0 * degree * S)
        self.backend = backend or _accel.backend_name()
        if self.backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "numba" and _accel.numba is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        self._split = None
        self._blocks = None
        self._conj_flat = None

    @property
    def num_agents(self):
        return self.A.shape[0]

    def agent_gradients(self, X):
        """Gradient of ``f_i`` at ``X[i]`` for every agent, shape ``(N, K)``."""
        X = np.ascontiguousarray(X, dtype=np.complex128)
        if self.backend == "numba":
            Ar, Ai, Dr, Di = self._split_arrays()
            gr, gi = _agent_gradients_jit(
                Ar, Ai, np.ascontiguousarray(X.real), np.ascontiguousarray(X.imag),
                self.indptr, self.dst, Dr, Di, self.scale,
            )
            return gr + 1j * gi
        return self._agent_gradients_numpy(X)

    def mean_gradient(self, x):
        """``(1/N) sum_i grad f_i(x)`` at a single shared point."""
        x = np.ascontiguousarray(x, dtype=np.complex128)
        if self.backend == "numba":
            Ar, Ai, Dr, Di = self._split_arrays()
            gr, gi = _mean_gradient_jit(
                Ar, Ai, np.ascontiguousarray(x.real), np.ascontiguousarray(x.imag),
                self.src, self.dst, Dr, Di, self.scale,
            )
            return gr + 1j * gi
        return self._mean_gradient_numpy(x)

    def _split_arrays(self):
        if self._split is None:
            self._split = tuple(
                np.ascontiguousarray(a)
                for a in (self.A.real, self.A.imag, self.data.real, self.data.imag)
            )
        return self._split

    def _neighbour_blocks(self):
        # conj(A) rows of [i, N_i...], built once
        if self._blocks is None:
            conjA = np.conj(self.A)
            self._blocks = [
                np.ascontiguousarray(conjA[np.r_[i, self.dst[self.indptr[i] : self.indptr[i + 1]]]])
                for i in range(self.num_agents)
            ]
        return self._blocks

    def _agent_gradients_numpy(self, X):
        N, S, K = self.A.shape
        out = np.empty((N, K), dtype=np.complex128)
        for i, B in enumerate(self._neighbour_blocks()):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            y = B @ X[i]
            yi, yj = y[0], y[1:]
            err = yi * np.conj(yj) - self.data[lo:hi]
            w = np.empty_like(y)
            w[0] = np.sum(err * yj, axis=0)
            w[1:] = np.conj(err) * yi
            out[i] = self.scale[i] * np.conj(np.conj(w).reshape(-1) @ B.reshape(-1, K))
        return out

    def _mean_gradient_numpy(self, x):
        N, S, K = self.A.shape
        if self._conj_flat is None:
            self._conj_flat = np.conj(self.A).reshape(N * S, K)
        y = (self._conj_flat @ x).reshape(N, S)
        ys, yd = y[self.src], y[self.dst]
        err = ys * np.conj(yd) - self.data
        c = self.scale[self.src][:, None]
        W = np.zeros((N, S), dtype=np.complex128)
        np.add.at(W, self.dst, c * np.conj(err) * ys)
        np.add.at(W, self.src, c * err * yd)
        return np.conj(np.conj(W).reshape(-1) @ self._conj_flat) / N
