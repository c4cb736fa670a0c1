"""K-means partitioning of document vectors.

Lloyd iterations with k-means++ seeding, squared Euclidean distance on
L2-normalized vectors (equivalent ordering to cosine). Fully deterministic
given the config seed; the SSE sequence is recorded so monotonicity is
checkable from the outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Clustering


@dataclass(frozen=True)
class KMeansConfig:
    k: Optional[int] = None
    target_cluster_size: int = 10
    max_iter: int = 100
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1 when set")
        if self.target_cluster_size < 2:
            raise ValueError("target_cluster_size must be >= 2")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class KMeansResult:
    clustering: Clustering
    centroids: np.ndarray
    sse: float
    iterations_run: int
    sse_history: tuple[float, ...]


def choose_k(n_docs: int, cfg: KMeansConfig) -> int:
    """cfg.k if set, else ceil(n_docs / target_cluster_size), clamped to [1, n_docs]."""
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    k = cfg.k if cfg.k is not None else math.ceil(n_docs / cfg.target_cluster_size)
    return max(1, min(k, n_docs))


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(0, n)]
    dist_sq = np.sum((x - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist_sq.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centroids
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=dist_sq / total))
        centroids[i] = x[idx]
        dist_sq = np.minimum(dist_sq, np.sum((x - centroids[i]) ** 2, axis=1))
    return centroids


def _pairwise_sq_dist(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clip tiny negatives from cancellation
    d = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def kmeans_fit(
    vectors: Sequence[tuple[str, np.ndarray]], cfg: KMeansConfig, debug_checks: bool = False
) -> KMeansResult:
    """Cluster (doc_id, vector) pairs into choose_k clusters.

    Every document ends up assigned to its nearest centroid; the SSE sequence
    is non-increasing across iterations. Empty clusters are reseeded to the
    point farthest from their current centroid so k is preserved.
    """
    if not vectors:
        raise ValueError("kmeans_fit requires at least one vector")
    ids = [doc_id for doc_id, _ in vectors]
    x = np.stack([np.asarray(v, dtype=np.float64) for _, v in vectors])
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors contain non-finite values")
    n = x.shape[0]
    k = choose_k(n, cfg)
    if cfg.k is not None and cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds number of points ({n})")

    rng = np.random.default_rng(cfg.seed)
    centroids = _plusplus_init(x, k, rng)

    labels = np.zeros(n, dtype=np.int64)
    sse_history: list[float] = []
    prev_sse = math.inf
    iterations = 0
    for _ in range(cfg.max_iter):
        iterations += 1
        d = _pairwise_sq_dist(x, centroids)
        labels = np.argmin(d, axis=1)
        sse = float(d[np.arange(n), labels].sum())
        if debug_checks:
            assert sse <= prev_sse + 1e-9 * max(1.0, abs(prev_sse)), "SSE increased"
        sse_history.append(sse)

        converged = prev_sse != math.inf and (prev_sse - sse) <= cfg.tol * max(prev_sse, 1e-300)
        prev_sse = sse

        # centroid update (fixed reduction order: np.add.at over point index)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        empty = counts == 0
        nonempty = ~empty
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if empty.any():
            for j in np.flatnonzero(empty):
                far = int(np.argmax(np.sum((x - centroids[j]) ** 2, axis=1)))
                centroids[j] = x[far]

        if converged:
            break

    # final assignment against the last centroids so the nearest-centroid
    # postcondition holds exactly
    d = _pairwise_sq_dist(x, centroids)
    labels = np.argmin(d, axis=1)
    sse = float(d[np.arange(n), labels].sum())
    if not sse_history or sse < sse_history[-1]:
        sse_history.append(sse)

    clustering = Clustering(assignment={doc_id: int(c) for doc_id, c in zip(ids, labels)}, k=k)
    return KMeansResult(
        clustering=clustering,
        centroids=centroids,
        sse=sse,
        iterations_run=iterations,
        sse_history=tuple(sse_history),
    )
