import numpy as np
import pytest

from rslh.dataio import Dataset, make_blobs
from rslh.matrixkit import random_orthonormal_rows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_blobs():
    return make_blobs(300, 8, 5, seed=3)


def random_dataset(seed, n=500, dim=16, c=10):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(dim, n)), rng.integers(0, c, n), c)


def random_signs(rng, shape):
    return np.where(rng.random(shape) < 0.5, -1, 1).astype(np.int8)


def random_column_orthonormal(rng, n, d, count):
    """``count`` Haar-ish ``n x d`` matrices with orthonormal columns, stacked."""
    q, r = np.linalg.qr(rng.standard_normal((count, n, d)))
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]


def orthonormal_rows(L, n, seed):
    return random_orthonormal_rows(L, n, seed)


def numeric_gradient(f, x, h=1e-5):
    """Central differences of a scalar function of a matrix."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g
