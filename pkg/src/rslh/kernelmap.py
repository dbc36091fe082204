"""Gaussian RBF embedding against randomly chosen training anchors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .matrixkit import MatrixError, as_matrix

__all__ = ["KernelMap", "fit_kernel", "apply_kernel", "sq_distances", "default_anchor_count"]


@dataclass(frozen=True)
class KernelMap:
    """Anchors (``m x d``, one column per anchor) and the bandwidth ``sigma``."""

    anchors: np.ndarray
    sigma: float

    def __post_init__(self):
        anchors = as_matrix(self.anchors, "anchors")
        if anchors.shape[1] < 1:
            raise MatrixError("need at least one anchor")
        if not self.sigma > 0:
            raise MatrixError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def d(self) -> int:
        return self.anchors.shape[1]

    def __call__(self, features) -> np.ndarray:
        return apply_kernel(self, features)


def default_anchor_count(n: int, cap: int = 1000) -> int:
    return min(n, cap)


def sq_distances(anchors: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, ``d x n``, between anchor and sample columns."""
    # pairwise differences rather than the Gram expansion: coincident points give exactly 0
    return cdist(anchors.T, features.T, "sqeuclidean")


def fit_kernel(features, d: int, seed: int, sigma_override: float | None = None) -> KernelMap:
    """Pick ``d`` distinct training samples as anchors and set the bandwidth.

    Without an override, ``2 * sigma**2`` is the mean squared distance between
    every sample and every anchor.
    """
    features = as_matrix(features, "features")
    n = features.shape[1]
    if not 1 <= d <= n:
        raise MatrixError(f"need 1 <= d <= n, got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=d, replace=False)
    anchors = features[:, idx].copy()
    if sigma_override is not None:
        return KernelMap(anchors, sigma_override)
    mean_sq = sq_distances(anchors, features).mean()
    if mean_sq <= 0:
        raise MatrixError("all samples coincide with the anchors; pass sigma_override")
    return KernelMap(anchors, np.sqrt(mean_sq / 2.0))


def apply_kernel(km: KernelMap, features) -> np.ndarray:
    """``X[i, j] = exp(-||a_j - p_i||^2 / (2 sigma^2))``, shape ``d x n``."""
    features = as_matrix(features, "features")
    if features.shape[0] != km.anchors.shape[0]:
        raise MatrixError(f"features have {features.shape[0]} dims, anchors have {km.anchors.shape[0]}")
    X = np.exp(-sq_distances(km.anchors, features) / (2.0 * km.sigma**2))
    # very distant samples underflow to 0; keep entries strictly positive
    return np.maximum(X, np.finfo(np.float64).tiny)
