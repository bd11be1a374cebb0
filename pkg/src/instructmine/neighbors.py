"""K-nearest-neighbor search over embedding matrices.

Exact mode brute-forces all pairwise distances. Approximate mode builds
a neighbor graph by iterated local joins (the NN-descent idea): start
from random neighbor lists, repeatedly test each point against its
neighbors' neighbors plus a few random candidates, keep the best, stop
when the graph stabilizes.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, UsageError

METRICS = ("cosine", "euclidean")


def _check(matrix: np.ndarray, k: int, metric: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise DataError("embedding matrix must be 2-dimensional")
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}, expected one of {METRICS}")
    n = matrix.shape[0]
    if k < 1:
        raise UsageError(f"k must be positive, got {k}")
    if n < k + 1:
        raise DataError(f"need at least {k + 1} vectors for {k} neighbors, got {n}")
    return matrix


def _normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if not (norms > 0).all():
        raise DataError("zero-norm vector in embedding matrix")
    return matrix / norms


def exact_knn(
    matrix: np.ndarray, k: int, metric: str = "cosine", chunk: int = 512
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force k nearest neighbors of every row among the other rows.

    Returns (indices, distances), each of shape (n, k), sorted by
    ascending distance with index order breaking ties.
    """
    matrix = _check(matrix, k, metric)
    n = matrix.shape[0]
    if metric == "cosine":
        unit = _normalize(matrix)
    sq = (matrix ** 2).sum(axis=1)

    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        if metric == "cosine":
            d = 1.0 - unit[lo:hi] @ unit.T
        else:
            d = sq[lo:hi, None] + sq[None, :] - 2.0 * (matrix[lo:hi] @ matrix.T)
            np.maximum(d, 0.0, out=d)
            np.sqrt(d, out=d)
        d[np.arange(lo, hi) - lo, np.arange(lo, hi)] = np.inf
        part = np.argpartition(d, k - 1, axis=1)[:, :k]
        rows = np.arange(hi - lo)[:, None]
        # order the k winners by (distance, index) for determinism
        order = np.lexsort((part, d[rows, part]), axis=1)
        idx = part[rows, order]
        indices[lo:hi] = idx
        distances[lo:hi] = d[rows, idx]
    return indices, distances


def _top_k_unique(cand: np.ndarray, dist: np.ndarray, k: int, n: int):
    """Per row: drop duplicate candidates (keeping the best), take the k nearest."""
    nrows, width = cand.shape
    rows = np.arange(nrows)[:, None]
    order = np.argsort(dist, axis=1, kind="stable")
    cand = cand[rows, order]
    dist = dist[rows, order]
    key = np.repeat(np.arange(nrows), width) * np.int64(n) + cand.ravel()
    flat_order = np.argsort(key, kind="stable")
    sorted_key = key[flat_order]
    dup = np.zeros(key.shape[0], dtype=bool)
    dup[1:] = sorted_key[1:] == sorted_key[:-1]
    kill = np.zeros(key.shape[0], dtype=bool)
    kill[flat_order] = dup
    dist = dist.ravel()
    dist[kill] = np.inf
    dist = dist.reshape(nrows, width)
    pick = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return cand[rows, pick], dist[rows, pick]


def approx_knn(
    matrix: np.ndarray,
    k: int,
    metric: str = "cosine",
    seed: int = 0,
    graph_width: int | None = None,
    max_iters: int = 12,
    random_candidates: int = 8,
    chunk: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Approximate k nearest neighbors via iterated local joins.

    The working graph is wider than k (`graph_width`, default the larger
    of 4k and k+12) because extra slots help the joins escape bad random
    starts; unstructured high-dimensional data needs the full margin to
    reach high recall. The final result is the best k of the converged
    graph.
    """
    matrix = _check(matrix, k, metric)
    n = matrix.shape[0]
    if metric == "cosine":
        work = _normalize(matrix)
    else:
        work = matrix
    sq = (work ** 2).sum(axis=1)

    width = graph_width or max(4 * k, k + 12)
    width = min(width, n - 1)
    rng = np.random.default_rng(seed)
    graph = np.empty((n, width), dtype=np.int64)
    for i in range(n):
        cand = rng.choice(n - 1, size=width, replace=False)
        cand[cand >= i] += 1
        graph[i] = cand
    rows = np.arange(n)[:, None]

    def candidate_distances(cand: np.ndarray) -> np.ndarray:
        out = np.empty(cand.shape)
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            block = work[cand[lo:hi]]
            if metric == "cosine":
                sims = np.einsum("ij,ikj->ik", work[lo:hi], block, optimize=True)
                out[lo:hi] = 1.0 - sims
            else:
                dots = np.einsum("ij,ikj->ik", work[lo:hi], block, optimize=True)
                d = sq[lo:hi, None] + sq[cand[lo:hi]] - 2.0 * dots
                np.maximum(d, 0.0, out=d)
                out[lo:hi] = np.sqrt(d)
        return out

    for _ in range(max_iters):
        # sampled reverse edges, capped at `width` per node
        rev = np.full((n, width), -1, dtype=np.int64)
        fill = np.zeros(n, dtype=np.int64)
        src = np.repeat(np.arange(n), width)
        dst = graph.ravel()
        shuffle = rng.permutation(n * width)
        for s, d in zip(src[shuffle], dst[shuffle]):
            if fill[d] < width:
                rev[d, fill[d]] = s
                fill[d] += 1
        two_hop = graph[graph].reshape(n, width * width)
        explore = rng.integers(0, n, size=(n, random_candidates))
        cand = np.concatenate([graph, rev, two_hop, explore], axis=1)
        invalid = cand < 0
        cand[invalid] = 0
        dist = candidate_distances(cand)
        dist[invalid] = np.inf
        dist[cand == rows] = np.inf
        new_graph, _ = _top_k_unique(cand, dist, width, n)
        changed = int((new_graph != graph).sum())
        graph = new_graph
        if changed <= max(1, n * width // 1000):
            break

    final_dist = candidate_distances(graph)
    order = np.lexsort((graph, final_dist), axis=1)[:, :k]
    return graph[rows, order], final_dist[rows, order]


def knn_recall(approx_indices: np.ndarray, exact_indices: np.ndarray) -> float:
    """Fraction of true neighbors the approximate result found."""
    if approx_indices.shape != exact_indices.shape:
        raise UsageError("recall needs equally shaped index arrays")
    hits = 0
    for a, b in zip(approx_indices, exact_indices):
        hits += len(set(a.tolist()) & set(b.tolist()))
    return hits / exact_indices.size
