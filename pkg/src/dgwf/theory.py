"""Real-valued reformulation and the constants of the convergence analysis.

The complex objective is rewritten over ``x~ = [Re x; Im x]`` with explicit
``2K x 2K`` matrices per measurement row. This is deliberately a dense,
independent route: it shares no code with the Wirtinger kernels, so it can
serve as an oracle for them on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RIC_LIMIT = 0.214


class RicRangeError(ValueError):
    """Raised when a restricted isometry constant is outside ``[0, 0.214]``."""


# -- real lift ----------------------------------------------------------------


def to_real(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real, x.imag], axis=-1)


def to_complex(xt) -> np.ndarray:
    xt = np.asarray(xt, dtype=float)
    K = xt.shape[-1] // 2
    return xt[..., :K] + 1j * xt[..., K:]


def realify(a_i, a_j):
    """Real ``2K x 2K`` matrices of one or many sensing rows.

    Parameters
    ----------
    a_i, a_j : array_like, shape (..., K)
        Sampling vectors of the two receivers.

    Returns
    -------
    A_R, A_I : ndarray, shape (..., 2K, 2K)
        Satisfy ``x~ᵀ A_R x~ = Re(<a_i, x> conj(<a_j, x>))`` and likewise
        ``A_I`` for the imaginary part, with ``<a, x> = a^H x``.
    """
    a_i = np.asarray(a_i, dtype=complex)
    a_j = np.asarray(a_j, dtype=complex)
    if a_i.shape != a_j.shape:
        raise ValueError(f"sampling vectors differ in shape: {a_i.shape} vs {a_j.shape}")
    # <a, x> = a^H x is the plain bilinear form of conj(a)
    u, v = np.conj(a_i), np.conj(a_j)
    outer = lambda p, q: p[..., :, None] * q[..., None, :]
    A1 = outer(u.real, v.real) + outer(u.imag, v.imag)
    A2 = -outer(u.real, v.imag) + outer(u.imag, v.real)
    A_R = np.block([[A1, A2], [-A2, A1]])
    A_I = np.block([[A2, -A1], [A1, A2]])
    return A_R, A_I


@dataclass(frozen=True, eq=False)
class RealLift:
    """Stacked real-lift data for ``M`` measurement rows.

    ``weights[m]`` multiplies the squared residual of row ``m``; a single
    sensing pair with ``S`` samples uses ``1 / (2S)`` on every row.
    """

    A_R: np.ndarray
    A_I: np.ndarray
    d_R: np.ndarray
    d_I: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        M = self.A_R.shape[0]
        for name in ("A_I", "d_R", "d_I", "weights"):
            if getattr(self, name).shape[0] != M:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {M}")

    @property
    def num_rows(self):
        return self.A_R.shape[0]

    @property
    def dim(self):
        return self.A_R.shape[-1]

    @classmethod
    def from_rows(cls, a_i, a_j, data, weights=None) -> "RealLift":
        a_i = np.atleast_2d(a_i)
        a_j = np.atleast_2d(a_j)
        data = np.atleast_1d(np.asarray(data, dtype=complex))
        A_R, A_I = realify(a_i, a_j)
        if weights is None:
            weights = np.full(len(data), 1.0 / (2 * len(data)))
        return cls(A_R, A_I, data.real.copy(), data.imag.copy(), np.asarray(weights, dtype=float))

    @classmethod
    def from_problem(cls, problem) -> "RealLift":
        """Lift the network objective ``(1/N) sum_i f_i`` of a solver problem."""
        src, dst, vals = problem.directed
        N, S, _ = problem.sampling.shape
        degree = problem.graph.degrees
        w = 1.0 / (2.0 * degree[src] * S * N)
        return cls.from_rows(
            problem.sampling[src].reshape(-1, problem.num_voxels),
            problem.sampling[dst].reshape(-1, problem.num_voxels),
            vals.reshape(-1),
            np.repeat(w, S),
        )

    def forms(self, xt):
        """Quadratic forms ``(x~ᵀ A_R x~, x~ᵀ A_I x~)`` for every row."""
        xt = np.asarray(xt, dtype=float)
        return (
            np.einsum("i,mij,j->m", xt, self.A_R, xt),
            np.einsum("i,mij,j->m", xt, self.A_I, xt),
        )


def real_objective(xt, lift: RealLift) -> float:
    qR, qI = lift.forms(xt)
    return float(np.sum(lift.weights * ((lift.d_R - qR) ** 2 + (lift.d_I - qI) ** 2)))


def real_gradient(xt, lift: RealLift) -> np.ndarray:
    """Exact gradient of :func:`real_objective` in ``R^{2K}``."""
    xt = np.asarray(xt, dtype=float)
    qR, qI = lift.forms(xt)
    # d/dx (x' A x) = (A + A') x
    gR = np.einsum("mij,j->mi", lift.A_R, xt) + np.einsum("mji,j->mi", lift.A_R, xt)
    gI = np.einsum("mij,j->mi", lift.A_I, xt) + np.einsum("mji,j->mi", lift.A_I, xt)
    rR = lift.weights * (lift.d_R - qR)
    rI = lift.weights * (lift.d_I - qI)
    return -2.0 * (rR @ gR + rI @ gI)


# -- Lipschitz bound ----------------------------------------------------------


def sigma_max(A, tol=1e-10, max_iters=1000, rng_seed=0) -> np.ndarray:
    """Largest singular value of each matrix in a stack, by power iteration on ``AᵀA``."""
    A = np.asarray(A, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal((A.shape[0], A.shape[-1]))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    lam = np.zeros(A.shape[0])
    for _ in range(max_iters):
        w = np.einsum("mji,mj->mi", A, np.einsum("mij,mj->mi", A, v))
        new = np.linalg.norm(w, axis=1)
        nz = new > 0
        v[nz] = w[nz] / new[nz, None]
        done = np.abs(new - lam) <= tol * np.maximum(new, 1e-300)
        lam = new
        if np.all(done | ~nz):
            break
    out = np.sqrt(lam)
    return out[0] if single else out


def lipschitz_bound(lift: RealLift, tau: float) -> float:
    """Gradient Lipschitz constant of the lifted objective on ``{||x~||^2 <= tau}``.

    Per row the bound is ``d_R s_R + d_I s_I + 3 tau (s_R^2 + s_I^2)``,
    weighted by ``2 * weights`` (which is ``1/S`` for a single sensing pair).
    Data values enter with their sign.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    sR = sigma_max(lift.A_R)
    sI = sigma_max(lift.A_I)
    per_row = lift.d_R * sR + lift.d_I * sI + 3.0 * tau * (sR**2 + sI**2)
    return float(np.sum(2.0 * lift.weights * per_row))


@dataclass(frozen=True)
class SetBound:
    """Radius of the bounded iterate set ``{x~ : ||x~||^2 <= tau}``."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def from_initial(cls, x0, factor=4.0) -> "SetBound":
        return cls(factor * float(np.sum(np.abs(x0) ** 2)))

    def contains(self, xt) -> bool:
        return float(np.sum(np.asarray(xt) ** 2)) <= self.tau

    def sample(self, n, dim, rng) -> np.ndarray:
        """``n`` points uniform in the ball of squared radius ``tau``."""
        g = rng.standard_normal((n, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = math.sqrt(self.tau) * rng.random(n) ** (1.0 / dim)
        return g * r[:, None]


# -- RIC-derived constants ------------------------------------------------------


@dataclass(frozen=True)
class RicConstants:
    delta1: float
    eps: float
    delta2: float
    c: float
    h: float
    alpha: float | None = None
    beta: float | None = None


def ric_constants(delta1: float, x_norm: float | None = None, split: float = 0.5) -> RicConstants:
    """Constants of the regularity condition for a rank-1 RIC ``delta1``.

    If ``x_norm`` (``||x*||``) is given, an admissible pair is returned with

        1/(alpha ||x*||^2) = split * h,   c^2 ||x*||^2 / beta = (1 - split) * h,

    so the admissibility constraint holds with equality.
    """
    if not 0.0 <= delta1 <= RIC_LIMIT:
        raise RicRangeError(f"delta1={delta1} outside [0, {RIC_LIMIT}]")
    d = float(delta1)
    eps = math.sqrt((2 + d) * (1 - math.sqrt(1 - d / (1 + d))) + d * d / 8)
    delta2 = math.sqrt(2) * (2 + eps) * d / math.sqrt((1 - eps) * (2 - eps))
    c = (2 + eps) * (1 + eps) * (1 + d)
    h = (1 - delta2) * (1 - eps) * (2 - eps)
    alpha = beta = None
    if x_norm is not None:
        if not 0.0 < split < 1.0:
            raise ValueError("split must lie strictly between 0 and 1")
        n2 = float(x_norm) ** 2
        alpha = 1.0 / (split * h * n2)
        beta = c * c * n2 / ((1.0 - split) * h)
    return RicConstants(d, eps, delta2, c, h, alpha, beta)


# -- RIC estimation -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiftedOperator:
    """Linear map ``X -> [sqrt(w_m) left_m^H X right_m]_m`` on ``K x K`` matrices."""

    left: np.ndarray
    right: np.ndarray
    weights: np.ndarray | None = None

    @classmethod
    def from_problem(cls, problem, weights=None) -> "LiftedOperator":
        src, dst, _ = problem.directed
        K = problem.num_voxels
        return cls(
            problem.sampling[src].reshape(-1, K),
            problem.sampling[dst].reshape(-1, K),
            weights,
        )

    def _sqrt_w(self):
        return 1.0 if self.weights is None else np.sqrt(self.weights)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        return self._sqrt_w() * np.einsum("mk,kl,ml->m", np.conj(self.left), X, self.right)

    def apply_rank1(self, w) -> np.ndarray:
        """``apply(w w^H)`` without forming the matrix."""
        w = np.asarray(w, dtype=complex)
        return self._sqrt_w() * (np.conj(self.left) @ w) * np.conj(np.conj(self.right) @ w)

    def scaled(self, factor: float) -> "LiftedOperator":
        """Operator whose squared norms are multiplied by ``factor``."""
        base = np.ones(len(self.left)) if self.weights is None else self.weights
        return LiftedOperator(self.left, self.right, base * factor)

    def matrix(self) -> np.ndarray:
        """Dense ``M x K^2`` matrix acting on row-major ``vec(X)``."""
        rows = np.conj(self.left)[:, :, None] * self.right[:, None, :]
        rows = rows.reshape(len(rows), -1)
        return rows if self.weights is None else np.sqrt(self.weights)[:, None] * rows


def rank1_ratios(op: LiftedOperator, trials: int, rng_seed=0, scale=1.0) -> np.ndarray:
    """``||F(X)||^2 / ||X||_F^2`` for random ``X = w w^H``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    K = op.left.shape[1]
    rng = np.random.default_rng(rng_seed)
    ratios = np.empty(trials)
    for t in range(trials):
        w = rng.standard_normal(K) + 1j * rng.standard_normal(K)
        w *= scale / np.linalg.norm(w)
        y = op.apply_rank1(w)
        ratios[t] = np.sum(np.abs(y) ** 2) / np.linalg.norm(w) ** 4
    return ratios


def estimate_ric_rank1(op: LiftedOperator, trials=500, rng_seed=0) -> float:
    """Monte Carlo lower bound on the rank-1 RIC: ``max |ratio - 1|``.

    Sampling can only find rank-1 matrices that stretch or shrink the
    operator; it can never certify an upper bound.
    """
    r = rank1_ratios(op, trials, rng_seed)
    return float(np.max(np.abs(r - 1.0)))


def isometry_scale(op: LiftedOperator, trials=500, rng_seed=0) -> float:
    """Factor ``2 / (max + min)`` of the sampled ratios.

    Scaling the operator by it centres the sampled ratios on 1, which is
    the smallest RIC estimate attainable by rescaling; the estimate then
    equals ``(max - min) / (max + min)``.
    """
    r = rank1_ratios(op, trials, rng_seed)
    return float(2.0 / (r.max() + r.min()))


# -- sampled RC / PL checks ---------------------------------------------------


@dataclass(frozen=True)
class InequalityReport:
    name: str
    samples: int
    violations: int
    worst_margin: float

    @property
    def passed(self):
        return self.violations == 0


def aligned_reference(zt, x_star):
    # nearest point of the orbit x* e^{i phi} to z
    z = to_complex(zt)
    ip = np.vdot(x_star, z)
    rot = ip / abs(ip) if ip != 0 else 1.0
    return to_real(x_star * rot)


def check_rc(grad, x_star, alpha, beta, samples, rtol=1e-12) -> InequalityReport:
    """Sampled check of the regularity condition

        <grad f(z), z - x*> >= (1/alpha) ||grad f(z)||^2 + (1/beta) ||z - x*||^2

    with ``x*`` phase-aligned to each ``z``. The instance should be scaled
    so that ``||x*|| = 1``; the constants of :func:`ric_constants` are only
    comparable with this inequality at unit scale.

    Parameters
    ----------
    grad : callable
        Real gradient, ``R^{2K} -> R^{2K}``.
    x_star : array_like, complex, shape (K,)
    samples : iterable of real ``2K`` vectors
    """
    x_star = np.asarray(x_star, dtype=complex)
    violations = 0
    worst = math.inf
    n = 0
    for zt in samples:
        zt = np.asarray(zt, dtype=float)
        ref = aligned_reference(zt, x_star)
        h = zt - ref
        g = grad(zt)
        lhs = float(g @ h)
        rhs = float(g @ g) / alpha + float(h @ h) / beta
        margin = lhs - rhs
        if margin < -rtol * (abs(lhs) + abs(rhs)):
            violations += 1
        worst = min(worst, margin)
        n += 1
    return InequalityReport("RC", n, violations, worst)


def pl_constant(beta: float, lipschitz: float) -> float:
    """PL constant ``1 / (beta^2 L_f)`` implied by the regularity condition."""
    if not beta > 0 or not lipschitz > 0:
        raise ValueError("beta and the Lipschitz constant must be positive")
    return 1.0 / (beta * beta * lipschitz)


def check_pl(fun, grad, f_star, mu, samples, rtol=1e-12) -> InequalityReport:
    """Sampled check of ``0.5 ||grad f(z)||^2 >= mu (f(z) - f*)``."""
    violations = 0
    worst = math.inf
    n = 0
    for zt in samples:
        g = grad(zt)
        lhs = 0.5 * float(g @ g)
        rhs = mu * (fun(zt) - f_star)
        margin = lhs - rhs
        if margin < -rtol * (abs(lhs) + abs(rhs)):
            violations += 1
        worst = min(worst, margin)
        n += 1
    return InequalityReport("PL", n, violations, worst)


def ball_samples(x_star, radius, n, rng) -> np.ndarray:
    """Real points uniform in a ball of ``radius`` around ``x~*``."""
    xt = to_real(x_star)
    pts = SetBound(radius * radius).sample(n, xt.size, rng)
    return xt + pts
