"""Exact cosine-similarity search over a fixed CVE vector collection.

Vectors are unit-length, so cosine similarity is a dot product. Ranking
scans the whole collection in blocks; no approximation, no pruning.
Scores are accumulated in float64 so that ranking order and ties are
reproducible across platforms, then clamped to [-1, 1] to absorb
rounding just outside the interval.

Ties are broken by CVE id ascending, which makes every ranking a total
order and byte-identical across runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import vecstore
from .errors import CorruptionError
from .embedder import DIM, UNIT_TOLERANCE

DEFAULT_BLOCK_ROWS = 16384


@dataclass(frozen=True)
class Prediction:
    cve_id: str
    score: float


class VectorIndex:
    """Immutable id-keyed collection of unit vectors."""

    def __init__(self, ids: list[str], vectors: np.ndarray):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[1] != DIM:
            raise ValueError(f"index vectors must be (n, {DIM}), got {vectors.shape}")
        if len(ids) != vectors.shape[0]:
            raise ValueError(f"{len(ids)} ids for {vectors.shape[0]} vectors")
        if len(set(ids)) != len(ids):
            raise ValueError("index ids must be unique")
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOLERANCE)[0]
        if bad.size:
            raise ValueError(
                f"{bad.size} index vectors are not unit length (first: "
                f"{ids[int(bad[0])]}, norm {norms[int(bad[0])]:.8f})"
            )
        self.ids = list(ids)
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.ids)


def similarity(p: np.ndarray, q: np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != (DIM,) or q.shape != (DIM,):
        raise ValueError(f"similarity wants two ({DIM},) vectors")
    return float(np.clip(np.dot(p, q), -1.0, 1.0))


def all_scores(
    query: np.ndarray, index: VectorIndex, block_rows: int = DEFAULT_BLOCK_ROWS
) -> np.ndarray:
    """Scores of the query against every index row, float64, clamped."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (DIM,):
        raise ValueError(f"query must be ({DIM},), got {q.shape}")
    n = len(index)
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, block_rows):
        block = index.vectors[start:start + block_rows]
        scores[start:start + block.shape[0]] = block.astype(np.float64) @ q
    np.clip(scores, -1.0, 1.0, out=scores)
    return scores


def _top_order(ids: list[str], scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k best rows under (score desc, id asc)."""
    n = len(ids)
    if k < n:
        # Take everything tied with the k-th best score so ties are
        # resolved by id, not by partition order.
        cut = np.partition(scores, n - k)[n - k]
        candidates = np.nonzero(scores >= cut)[0].tolist()
    else:
        candidates = list(range(n))
    candidates.sort(key=lambda i: (-scores[i], ids[i]))
    return candidates[:k]


def rank_top_k(query: np.ndarray, index: VectorIndex, k: int) -> list[Prediction]:
    """The k most similar index entries, best first.

    Requires k >= 1 and a non-empty index. Returns min(k, len(index))
    predictions sorted by score descending, CVE id ascending on ties.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise ValueError("cannot rank against an empty index")
    scores = all_scores(query, index)
    order = _top_order(index.ids, scores, k)
    return [Prediction(index.ids[i], float(scores[i])) for i in order]


def rank_top_k_batch(
    queries: np.ndarray, index: VectorIndex, k: int
) -> list[list[Prediction]]:
    """rank_top_k for a (m, DIM) query matrix, one GEMM per block.

    Matrix-matrix BLAS accumulates in a different order than the
    single-query path, so scores can differ from rank_top_k in the last
    ulp; ranking order and ties are unaffected at realistic score gaps.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise ValueError("cannot rank against an empty index")
    qm = np.asarray(queries, dtype=np.float64)
    if qm.ndim != 2 or qm.shape[1] != DIM:
        raise ValueError(f"queries must be (m, {DIM}), got {qm.shape}")
    n = len(index)
    scores = np.empty((qm.shape[0], n), dtype=np.float64)
    for start in range(0, n, DEFAULT_BLOCK_ROWS):
        block = index.vectors[start:start + DEFAULT_BLOCK_ROWS].astype(np.float64)
        scores[:, start:start + block.shape[0]] = qm @ block.T
    np.clip(scores, -1.0, 1.0, out=scores)
    results = []
    for row in scores:
        order = _top_order(index.ids, row, k)
        results.append([Prediction(index.ids[i], float(row[i])) for i in order])
    return results


def apply_threshold(predictions: list[Prediction], rho: float) -> list[Prediction]:
    """Keep predictions scoring at least rho; order is preserved.

    The comparison is inclusive: a score exactly equal to rho stays in.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be within [0, 1], got {rho}")
    return [p for p in predictions if p.score >= rho]


def save_index(index: VectorIndex, path: str | os.PathLike) -> None:
    """Persist to the binary vector container; ids stored in index order."""
    with vecstore.VectorWriter(path, DIM) as writer:
        for vec_id, row in zip(index.ids, index.vectors):
            writer.add(vec_id, row)


def load_index(path: str | os.PathLike) -> VectorIndex:
    """Load a container written by save_index, re-validating invariants."""
    ids, vectors = vecstore.read_vectors(path, expected_dim=DIM)
    if len(set(ids)) != len(ids):
        raise CorruptionError(f"{os.fspath(path)}: duplicate ids in index")
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOLERANCE)[0]
    if bad.size:
        raise CorruptionError(
            f"{os.fspath(path)}: vector {ids[int(bad[0])]} has norm "
            f"{norms[int(bad[0])]:.8f}, expected 1 within {UNIT_TOLERANCE}"
        )
    return VectorIndex(ids, vectors)
