"""Bit-pool boosting: pick L balanced, mutually uncorrelated bits from T runs.

The T code matrices are stacked into a ``T*L x n`` pool. Pool rows are
clustered into L groups by normalized spectral clustering, and each group
contributes its most balanced bit. A ridge projection from kernel features to
the selected bits then encodes unseen samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Hyperparams, p_step, train
from .dataio import Dataset
from .kernelmap import KernelMap, apply_kernel, default_anchor_count, fit_kernel
from .matrixkit import MatrixError, sgn

__all__ = [
    "BitPool",
    "BoostedModel",
    "balance_degree",
    "build_pool",
    "bit_affinity",
    "spectral_embedding",
    "kmeans",
    "cluster_bits",
    "select_bits",
    "greedy_select",
    "fit_extension",
    "boost",
]


@dataclass(frozen=True, eq=False)
class BitPool:
    """Stacked codes of T runs; ``provenance[r] = (run, bit)`` for pool row r."""

    bits: np.ndarray
    provenance: np.ndarray
    kernel: KernelMap | None = None

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    @property
    def n(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True, eq=False)
class BoostedModel:
    selected: np.ndarray
    H: np.ndarray
    P: np.ndarray
    kernel: KernelMap
    hyper: Hyperparams
    assignment: np.ndarray
    used_fallback: bool = False
    pool: BitPool | None = None

    @property
    def L(self) -> int:
        return self.H.shape[0]

    def encode(self, features) -> np.ndarray:
        return sgn(self.P.T @ apply_kernel(self.kernel, features))


def balance_degree(bit_row) -> int:
    """``|sum of the row|``; 0 means as many +1 as -1."""
    return int(abs(np.asarray(bit_row, dtype=np.int64).sum()))


def build_pool(ds: Dataset, hyper: Hyperparams, T: int = 3, seeds=None, *, seed: int = 0) -> BitPool:
    """Train T models and stack their codes run-major.

    All runs share one kernel map, fitted with the first seed, so that a single
    projection can later encode queries. Seeds default to ``seed + t``.
    """
    if T < 1:
        raise ValueError(f"need T >= 1 runs, got {T}")
    seeds = [seed + t for t in range(T)] if seeds is None else [int(s) for s in seeds]
    if len(seeds) != T:
        raise ValueError(f"got {len(seeds)} seeds for T={T} runs")
    d = min(hyper.n_anchors or default_anchor_count(ds.n), ds.n)
    kernel = fit_kernel(ds.features, d, seeds[0], hyper.sigma)
    blocks = [train(ds, hyper, s, kernel=kernel).H for s in seeds]
    L = hyper.L
    provenance = np.array([(t, b) for t in range(T) for b in range(L)], dtype=np.int64)
    return BitPool(np.vstack(blocks).astype(np.int8), provenance, kernel)


def bit_affinity(bits) -> np.ndarray:
    """``|<h_i, h_j>| / n``: 1 for identical or complementary bits, 0 for uncorrelated ones."""
    h = np.asarray(bits, dtype=np.float64)
    return np.abs(h @ h.T) / h.shape[1]


def spectral_embedding(A, k: int) -> np.ndarray:
    """Row-normalized top-k eigenvectors of ``D^-1/2 A D^-1/2``."""
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise MatrixError("affinity has an isolated node")
    inv_sqrt = 1.0 / np.sqrt(deg)
    M = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    M = 0.5 * (M + M.T)
    try:
        _, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"eigendecomposition failed: {exc}") from exc
    V = vecs[:, ::-1][:, :k]
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    return V / np.where(norms > 0, norms, 1.0)


def _kmeans_once(points, k, rng, max_iter):
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        p = d2 / total if total > 0 else np.full(n, 1.0 / n)
        centers.append(points[rng.choice(n, p=p)])
    centers = np.array(centers)
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, inertia


def kmeans(points, k: int, seed: int, n_init: int = 20, max_iter: int = 300) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; best of ``n_init`` restarts.

    Restarts that leave a cluster empty only win when every restart does.
    """
    points = np.asarray(points, dtype=np.float64)
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"need 1 <= k <= {points.shape[0]}, got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, inertia = _kmeans_once(points, k, rng, max_iter)
        full = np.unique(labels).size == k
        key = (not full, inertia)
        if best is None or key < best[0]:
            best = (key, labels)
    return best[1]


def cluster_bits(pool: BitPool | np.ndarray, L: int, seed: int = 0, n_init: int = 20) -> np.ndarray:
    """Spectral clustering of the pool rows into L groups."""
    bits = pool.bits if isinstance(pool, BitPool) else np.asarray(pool)
    if not 1 <= L <= bits.shape[0]:
        raise ValueError(f"cannot split {bits.shape[0]} bits into {L} clusters")
    if L == 1:
        return np.zeros(bits.shape[0], dtype=np.int64)
    emb = spectral_embedding(bit_affinity(bits), L)
    return kmeans(emb, L, seed, n_init=n_init).astype(np.int64)


def greedy_select(bits, L: int, max_affinity: float = 0.95) -> np.ndarray:
    """Most balanced rows first, skipping rows too correlated with earlier picks.

    If fewer than L rows pass the affinity test, the best remaining rows fill
    the gap.
    """
    bits = np.asarray(bits)
    degrees = np.abs(bits.astype(np.int64).sum(axis=1))
    order = np.lexsort((np.arange(bits.shape[0]), degrees))
    A = bit_affinity(bits)
    picked: list[int] = []
    for r in order:
        if len(picked) == L:
            break
        if all(A[r, p] < max_affinity for p in picked):
            picked.append(int(r))
    for r in order:
        if len(picked) == L:
            break
        if r not in picked:
            picked.append(int(r))
    return np.array(picked, dtype=np.int64)


def select_bits(pool: BitPool | np.ndarray, assignment, L: int | None = None) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per cluster, the pool row with the smallest balance degree.

    Ties go to the lowest pool row. Returns ``(selected, H_final, used_fallback)``;
    an empty cluster switches to :func:`greedy_select`.
    """
    bits = pool.bits if isinstance(pool, BitPool) else np.asarray(pool)
    assignment = np.asarray(assignment)
    L = int(assignment.max()) + 1 if L is None else L
    degrees = np.abs(bits.astype(np.int64).sum(axis=1))
    selected = []
    for k in range(L):
        members = np.flatnonzero(assignment == k)
        if members.size == 0:
            chosen = greedy_select(bits, L)
            return chosen, bits[chosen].copy(), True
        selected.append(members[np.argmin(degrees[members])])
    selected = np.array(selected, dtype=np.int64)
    return selected, bits[selected].copy(), False


def fit_extension(H_final, X, lam: float) -> np.ndarray:
    """Ridge projection ``(X X^T + lam I)^-1 X H^T`` from kernel features to codes."""
    return p_step(np.asarray(H_final, dtype=np.float64), X, lam)


def boost(
    ds: Dataset,
    hyper: Hyperparams,
    T: int = 3,
    seeds=None,
    *,
    seed: int = 0,
    cluster_seed: int | None = None,
) -> BoostedModel:
    pool = build_pool(ds, hyper, T, seeds, seed=seed)
    assignment = cluster_bits(pool, hyper.L, seed if cluster_seed is None else cluster_seed)
    selected, H, fallback = select_bits(pool, assignment, hyper.L)
    X = apply_kernel(pool.kernel, ds.features)
    P = fit_extension(H, X, hyper.lam)
    return BoostedModel(selected, H, P, pool.kernel, hyper, assignment, fallback, pool)
