"""RSLH training: similarity compression and the four alternating updates.

Shapes used throughout (n samples, c classes, d anchors, L bits)::

    Y  c x n   labels in {-1, +1}        X  d x n   kernel features
    W  L x c   label/code regression     B  L x n   real codes, B B^T = I
    H  L x n   binary codes              P  d x L   feature -> B projection
    R  n x d   orthonormal columns       G  n x d   S R

The objective is

    ||Y - W^T B||^2 + alpha ||H - W Y||^2 + beta ||H - B||^2
      + gamma ||B^T H R - G||^2 + mu ||B - P^T X||^2 + lam ||P||^2

and every update below is a minimizer (or, for H, a majorization step) of
that objective in one block, so the recorded trace never goes up.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataio import Dataset, build_label_matrix
from .kernelmap import KernelMap, apply_kernel, default_anchor_count, fit_kernel
from .matrixkit import MatrixError, random_orthonormal_rows, sgn, solve_spd, svd

__all__ = [
    "Hyperparams",
    "Similarity",
    "RslhModel",
    "ShortCodeWarning",
    "build_similarity",
    "compute_R",
    "compute_G",
    "w_step",
    "b_step",
    "h_step",
    "p_step",
    "objective",
    "objective_terms",
    "init_state",
    "train",
    "encode",
]


class ShortCodeWarning(UserWarning):
    """Code length below log2(c): some classes must share a code."""


@dataclass(frozen=True)
class Hyperparams:
    L: int
    alpha: float = 3.0
    beta: float = 1e-2
    gamma: float = 1e-5
    mu: float = 1e-5
    lam: float = 1e-6
    max_iters: int = 30
    rel_tol: float = 1e-4
    n_anchors: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"code length must be >= 1, got {self.L}")
        for name in ("alpha", "beta", "gamma", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.n_anchors is not None and self.n_anchors < 1:
            raise ValueError("n_anchors must be >= 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def ridge(self) -> float:
        """Ridge weight of the P update once the objective is divided by mu."""
        return self.lam / self.mu if self.mu > 0 else math.inf


class Similarity:
    """Pairwise label similarity ``S`` (+1 same class, -1 otherwise), kept implicit.

    For one-hot +-1 label columns, ``y_i . y_j`` is ``c`` for a shared class and
    ``c - 4`` otherwise, so ``S = (Y^T Y - (c - 2)) / 2`` and products with
    ``S`` cost ``O(n c k)`` without forming the ``n x n`` matrix.
    """

    def __init__(self, Y, dense_cap: int = 4096):
        self.Y = np.asarray(Y, dtype=np.float64)
        self.c, self.n = self.Y.shape
        self.dense_cap = dense_cap

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.n

    def matmul(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=np.float64)
        if M.shape[0] != self.n:
            raise MatrixError(f"S is {self.n}x{self.n}, operand has {M.shape[0]} rows")
        return 0.5 * (self.Y.T @ (self.Y @ M) - (self.c - 2) * M.sum(axis=0, keepdims=True))

    __matmul__ = matmul

    def rows(self, start: int, stop: int) -> np.ndarray:
        return 0.5 * (self.Y[:, start:stop].T @ self.Y - (self.c - 2))

    def dense(self) -> np.ndarray:
        if self.n > self.dense_cap:
            raise MatrixError(f"refusing to materialize a {self.n}x{self.n} similarity matrix")
        return self.rows(0, self.n)


def build_similarity(Y, dense_cap: int = 4096) -> Similarity:
    return Similarity(Y, dense_cap)


def _times_S(S, M) -> np.ndarray:
    # S is a Similarity or any explicit n x n array
    if isinstance(S, Similarity):
        return S.matmul(M)
    S = np.asarray(S, dtype=np.float64)
    if S.shape[1] != M.shape[0]:
        raise MatrixError(f"S is {S.shape}, operand has {M.shape[0]} rows")
    return S @ M


def compute_R(S, X) -> np.ndarray:
    """Column-orthonormal ``R`` (``n x d``) maximizing ``Tr(R^T S X^T)``."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    if X.shape[0] > n:
        raise MatrixError(f"need d <= n for orthonormal columns, got d={X.shape[0]}, n={n}")
    U, _, Vt = svd(_times_S(S, X.T), full_matrices=False)
    return U @ Vt


def compute_G(S, R) -> np.ndarray:
    return _times_S(S, np.asarray(R, dtype=np.float64))


def w_step(B, H, Y, alpha: float) -> np.ndarray:
    """``W = (B Y^T + alpha H Y^T)(alpha Y Y^T + I)^-1``.

    Exact minimizer of ``||Y - W^T B||^2 + alpha ||H - W Y||^2`` when
    ``B B^T = I``.
    """
    B, H, Y = (np.asarray(a, dtype=np.float64) for a in (B, H, Y))
    if B.shape != H.shape or B.shape[1] != Y.shape[1]:
        raise MatrixError(f"shape mismatch: B {B.shape}, H {H.shape}, Y {Y.shape}")
    c = Y.shape[0]
    rhs = (B + alpha * H) @ Y.T
    return solve_spd(alpha * (Y @ Y.T) + np.eye(c), rhs.T).T


def b_step(W, H, P, X, G, R, beta: float, gamma: float, mu: float, Y) -> np.ndarray:
    """Orthogonal Procrustes update: ``B`` maximizing ``Tr(Q B)`` with ``B B^T = I``."""
    W, H, P, X, G, R, Y = (np.asarray(a, dtype=np.float64) for a in (W, H, P, X, G, R, Y))
    L, n = H.shape
    if L > n:
        raise MatrixError(f"need L <= n, got L={L}, n={n}")
    Q = Y.T @ W.T + beta * H.T + gamma * (G @ (R.T @ H.T)) + mu * (X.T @ P)
    U, _, Vt = svd(Q, full_matrices=False)
    return (U @ Vt).T


def h_step(W, Y, B, G, R, beta: float, gamma: float, *, alpha: float = 1.0, H_prev=None) -> np.ndarray:
    """Binary update ``H = sgn(alpha W Y + beta B + gamma B G R^T [+ correction])``.

    With ``alpha = 1`` and no ``H_prev`` this is the plain sign rule. The sign
    rule is exact only when ``||H R||`` does not depend on ``H`` (square
    orthogonal ``R``). For ``d < n``, passing the current codes as ``H_prev``
    adds ``gamma (H_prev - H_prev R R^T)``, which minimizes a tight upper bound
    of the subproblem, so the objective cannot increase.
    """
    W, Y, B, G, R = (np.asarray(a, dtype=np.float64) for a in (W, Y, B, G, R))
    arg = alpha * (W @ Y) + beta * B + gamma * ((B @ G) @ R.T)
    if H_prev is not None and gamma:
        Hp = np.asarray(H_prev, dtype=np.float64)
        arg += gamma * (Hp - (Hp @ R) @ R.T)
    return sgn(arg)


def p_step(B, X, lam: float) -> np.ndarray:
    """Ridge regression ``P = (X X^T + lam I)^-1 X B^T``."""
    B, X = np.asarray(B, dtype=np.float64), np.asarray(X, dtype=np.float64)
    if B.shape[1] != X.shape[1]:
        raise MatrixError(f"B has {B.shape[1]} samples, X has {X.shape[1]}")
    if not lam > 0:
        raise MatrixError("lam must be > 0")
    d = X.shape[0]
    return solve_spd(X @ X.T + lam * np.eye(d), X @ B.T)


def objective_terms(W, B, H, P, hyper: Hyperparams, X, Y, G, R) -> tuple[float, ...]:
    """The six weighted terms of the training objective, in order."""
    H = np.asarray(H, dtype=np.float64)
    sq = lambda a: float(np.sum(np.square(a)))  # noqa: E731
    return (
        sq(Y - W.T @ B),
        hyper.alpha * sq(H - W @ Y),
        hyper.beta * sq(H - B),
        hyper.gamma * sq(B.T @ (H @ R) - G),
        hyper.mu * sq(B - P.T @ X),
        hyper.lam * sq(P),
    )


def objective(W, B, H, P, hyper: Hyperparams, X, Y, G, R) -> float:
    return math.fsum(objective_terms(W, B, H, P, hyper, X, Y, G, R))


@dataclass(frozen=True, eq=False)
class RslhModel:
    W: np.ndarray
    B: np.ndarray
    H: np.ndarray
    P: np.ndarray
    R: np.ndarray
    G: np.ndarray
    kernel: KernelMap
    hyper: Hyperparams
    objective_trace: tuple[float, ...] = field(default=())

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def n_sweeps(self) -> int:
        return len(self.objective_trace) - 1

    def encode(self, features) -> np.ndarray:
        return encode(self, features)


def _child_seeds(seed: int, k: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k)]


def init_state(L: int, n: int, c: int, d: int, seed: int) -> dict:
    """Random starting point: orthonormal ``B``, Gaussian-sign ``H``, zero ``W`` and ``P``."""
    b_seed, h_seed = _child_seeds(seed, 2)
    return {
        "W": np.zeros((L, c)),
        "B": random_orthonormal_rows(L, n, b_seed),
        "H": sgn(np.random.default_rng(h_seed).standard_normal((L, n))),
        "P": np.zeros((d, L)),
    }


StepCallback = Callable[[str, dict], None]


def train(
    ds: Dataset,
    hyper: Hyperparams,
    seed: int = 0,
    *,
    kernel: KernelMap | None = None,
    callback: StepCallback | None = None,
) -> RslhModel:
    """Fit an RSLH model on ``ds``.

    Each sweep runs the W, B, H and P updates in that order. Training stops
    after ``hyper.max_iters`` sweeps or once the relative objective decrease
    drops below ``hyper.rel_tol``. ``callback(step, state)`` is invoked after
    every update with the live state dict.
    """
    L, n, c = hyper.L, ds.n, ds.c
    if L > n:
        raise ValueError(f"code length {L} exceeds the number of samples {n}")
    if L < math.log2(c):
        warnings.warn(f"L={L} bits cannot separate c={c} classes (log2 c = {math.log2(c):.2f})", ShortCodeWarning, stacklevel=2)

    if kernel is None:
        d = hyper.n_anchors or default_anchor_count(n)
        kernel = fit_kernel(ds.features, min(d, n), seed, hyper.sigma)
    X = apply_kernel(kernel, ds.features)
    Y = build_label_matrix(ds.labels, c)
    S = build_similarity(Y)
    R = compute_R(S, X)
    G = compute_G(S, R)

    state = init_state(L, n, c, kernel.d, seed)

    def obj():
        return objective(state["W"], state["B"], state["H"], state["P"], hyper, X, Y, G, R)

    trace = [obj()]
    for _ in range(hyper.max_iters):
        state["W"] = w_step(state["B"], state["H"], Y, hyper.alpha)
        if callback:
            callback("W", state)
        state["B"] = b_step(state["W"], state["H"], state["P"], X, G, R, hyper.beta, hyper.gamma, hyper.mu, Y)
        if callback:
            callback("B", state)
        state["H"] = h_step(state["W"], Y, state["B"], G, R, hyper.beta, hyper.gamma, alpha=hyper.alpha, H_prev=state["H"])
        if callback:
            callback("H", state)
        if hyper.mu > 0:
            state["P"] = p_step(state["B"], X, hyper.ridge)
        else:
            state["P"] = np.zeros_like(state["P"])
        if callback:
            callback("P", state)
        trace.append(obj())
        prev, cur = trace[-2], trace[-1]
        if (prev - cur) / max(1.0, prev) < hyper.rel_tol:
            break

    return RslhModel(
        W=state["W"], B=state["B"], H=state["H"], P=state["P"], R=R, G=G,
        kernel=kernel, hyper=hyper, objective_trace=tuple(trace),
    )


def encode(model, features) -> np.ndarray:
    """Out-of-sample codes ``sgn(P^T phi(a))``, one column per sample."""
    X = apply_kernel(model.kernel, features)
    return sgn(model.P.T @ X)

