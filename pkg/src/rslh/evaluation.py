"""Hamming ranking and retrieval metrics (mAP, mAP within radius 2, precision@K).

Relevance is label equality. Rankings sort by Hamming distance and break ties
by database index, so every metric is deterministic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import PackedCodes, atomic_write, pack_codes
from .matrixkit import random_orthonormal_rows, sgn

__all__ = [
    "EvalReport",
    "hamming_distance",
    "hamming_distances",
    "rank_database",
    "average_precision",
    "map_at_radius",
    "evaluate",
    "baseline_random_rotation",
]


def _as_packed(codes) -> PackedCodes:
    return codes if isinstance(codes, PackedCodes) else pack_codes(codes)


def hamming_distance(a, b) -> int:
    """Hamming distance between two codes (packed byte rows or +-1 vectors)."""
    if isinstance(a, PackedCodes) or isinstance(b, PackedCodes):
        a, b = _as_packed(a), _as_packed(b)
        if a.L != b.L or a.n != 1 or b.n != 1:
            raise ValueError("need two single codes of equal length")
        a, b = a.words[0], b.words[0]
    else:
        a, b = np.asarray(a), np.asarray(b)
        if a.dtype != np.uint8:
            if a.shape != b.shape:
                raise ValueError(f"code length mismatch: {a.shape} vs {b.shape}")
            a = np.packbits(a > 0, bitorder="little")
            b = np.packbits(b > 0, bitorder="little")
    if a.shape != b.shape:
        raise ValueError(f"code length mismatch: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def hamming_distances(query: PackedCodes, db: PackedCodes) -> np.ndarray:
    """All query-to-database distances, ``n_query x n_db`` (XOR + popcount)."""
    if query.L != db.L:
        raise ValueError(f"code length mismatch: {query.L} vs {db.L}")
    xor = np.bitwise_xor(query.words[:, None, :], db.words[None, :, :])
    return np.bitwise_count(xor).sum(axis=2, dtype=np.int64)


def rank_database(query, db) -> np.ndarray:
    """Database indices by ascending distance to a single query code."""
    q, db = _as_packed(query), _as_packed(db)
    if q.n != 1:
        raise ValueError("rank_database takes one query code")
    dist = hamming_distances(q, db)[0]
    return np.argsort(dist, kind="stable")


def average_precision(relevance) -> float:
    """Mean of precision@p over the positions p of relevant items."""
    rel = np.asarray(relevance, dtype=bool)
    if rel.size == 0:
        raise ValueError("empty relevance list")
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


@dataclass
class EvalReport:
    map: float
    map_at_h2: float
    precision_at_k: float
    k: int
    n_queries: int
    n_database: int
    code_length: int
    per_query: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "map_at_h2": self.map_at_h2,
            "precision_at_k": self.precision_at_k,
            "k": self.k,
            "n_queries": self.n_queries,
            "n_database": self.n_database,
            "code_length": self.code_length,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_per_query_csv(self, path) -> None:
        if self.per_query is None:
            raise ValueError("report was built without per-query detail")
        lines = ["query_index,ap,ap_h2,prec_k"]
        lines += [f"{i},{ap!r},{ap2!r},{pk!r}" for i, (ap, ap2, pk) in enumerate(self.per_query.tolist())]
        atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _per_query(dist_row, relevant, k, radius):
    order = np.argsort(dist_row, kind="stable")
    rel = relevant[order]
    ap = average_precision(rel)
    inside = dist_row[order] <= radius
    ap_r = average_precision(rel[inside]) if inside.any() else 0.0
    prec = float(rel[:k].sum()) / k
    return ap, ap_r, prec


def _distances_and_relevance(query_codes, db_codes, query_labels, db_labels):
    q, db = _as_packed(query_codes), _as_packed(db_codes)
    ql, dl = np.asarray(query_labels), np.asarray(db_labels)
    if ql.shape[0] != q.n or dl.shape[0] != db.n:
        raise ValueError("labels are not aligned with codes")
    return hamming_distances(q, db), ql[:, None] == dl[None, :]


def map_at_radius(query_codes, db_codes, query_labels, db_labels, radius: int = 2) -> float:
    """mAP over the items within ``radius``; an empty bucket scores 0."""
    dist, relevant = _distances_and_relevance(query_codes, db_codes, query_labels, db_labels)
    aps = [_per_query(dist[i], relevant[i], 1, radius)[1] for i in range(dist.shape[0])]
    return float(np.mean(aps))


def evaluate(query_codes, db_codes, query_labels, db_labels, k: int = 100, radius: int = 2) -> EvalReport:
    """Full-ranking mAP, mAP within ``radius`` and precision@k.

    Codes are ``L x n`` +-1 matrices or :class:`PackedCodes`.
    """
    dist, relevant = _distances_and_relevance(query_codes, db_codes, query_labels, db_labels)
    n_q, n_db = dist.shape
    if not 1 <= k <= n_db:
        raise ValueError(f"k must lie in [1, {n_db}], got {k}")
    per_query = np.array([_per_query(dist[i], relevant[i], k, radius) for i in range(n_q)])
    means = per_query.mean(axis=0)
    return EvalReport(
        map=float(means[0]),
        map_at_h2=float(means[1]),
        precision_at_k=float(means[2]),
        k=k,
        n_queries=n_q,
        n_database=n_db,
        code_length=_as_packed(query_codes).L,
        per_query=per_query,
    )


def baseline_random_rotation(features, L: int, seed: int, mean=None) -> np.ndarray:
    """Signs of a random orthonormal projection of centered features.

    Pass the training ``mean`` to encode queries consistently with a database.
    """
    features = np.asarray(features, dtype=np.float64)
    m = features.shape[0]
    if L > m:
        raise ValueError(f"L={L} exceeds the feature dimension {m}")
    if mean is None:
        mean = features.mean(axis=1, keepdims=True)
    proj = random_orthonormal_rows(L, m, seed)
    return sgn(proj @ (features - np.asarray(mean).reshape(m, 1)))
