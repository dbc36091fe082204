"""Dense linear-algebra kernels shared by the trainer and the boosting stage.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Every public
function here checks its outputs for NaN/Inf so non-finite values never leak
into training state.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "MatrixError",
    "NotPositiveDefiniteError",
    "SvdResult",
    "as_matrix",
    "svd",
    "solve_spd",
    "random_orthonormal_rows",
    "sgn",
]


class MatrixError(ValueError):
    """Raised when a matrix violates a precondition or a kernel fails."""


class NotPositiveDefiniteError(MatrixError):
    pass


class SvdResult(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    Vt: np.ndarray


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise MatrixError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError(f"{name} has non-finite entries")
    return a


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise MatrixError(f"{what} produced non-finite values")
    return a


def svd(m, full_matrices: bool = True) -> SvdResult:
    """Singular value decomposition ``m = U @ diag(S) @ Vt``.

    Singular values come back non-increasing. With ``full_matrices`` (the
    default) ``U`` is square ``rows x rows`` and ``Vt`` is ``cols x cols``;
    only the leading ``min(rows, cols)`` columns of ``U`` pair with ``S``.
    """
    a = as_matrix(m)
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise MatrixError(f"svd needs a non-empty matrix, got shape {a.shape}")
    try:
        U, S, Vt = scipy.linalg.svd(a, full_matrices=full_matrices, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on nasty inputs where gesvd still converges
        try:
            U, S, Vt = scipy.linalg.svd(a, full_matrices=full_matrices, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise MatrixError(f"SVD did not converge: {exc}") from exc
    return SvdResult(_finite(U, "svd"), _finite(S, "svd"), _finite(Vt, "svd"))


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a`` (Cholesky)."""
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=np.float64)
    vector = b.ndim == 1
    b = as_matrix(b[:, None] if vector else b, "b")
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"a must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise MatrixError(f"shape mismatch: a is {a.shape}, b is {b.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise MatrixError("a is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky factorization failed: {exc}") from exc
    x = _finite(scipy.linalg.cho_solve(factor, b, check_finite=False), "solve_spd")
    return x[:, 0] if vector else x


def random_orthonormal_rows(l: int, n: int, seed: int) -> np.ndarray:
    """An ``l x n`` matrix ``B`` with ``B @ B.T = I_l``, deterministic per seed."""
    if l < 1 or n < 1:
        raise MatrixError(f"need l >= 1 and n >= 1, got l={l}, n={n}")
    if l > n:
        raise MatrixError(f"cannot build {l} orthonormal rows in dimension {n}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, l)))
    # fix the sign ambiguity of QR so the draw is Haar-distributed
    q *= np.where(np.diag(r) < 0, -1.0, 1.0)
    return np.ascontiguousarray(q.T)


def sgn(a) -> np.ndarray:
    """Entrywise sign with ties resolved to +1; returns int8 values in {-1, +1}."""
    return np.where(np.asarray(a) >= 0, 1, -1).astype(np.int8)
