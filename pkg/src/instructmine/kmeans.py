"""Plain Lloyd's k-means, seeded and deterministic."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster `points` into `k` groups.

    Centers start at k distinct points sampled with the seed. Iteration
    stops when assignments are stable or after `max_iters` rounds. A
    cluster that loses all members keeps its previous center.

    Returns (labels, centers) with labels in [0, k).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k < 1:
        raise DataError(f"k must be positive, got {k}")
    if n < k:
        raise DataError(f"cannot make {k} clusters from {n} points")

    rng = np.random.default_rng(seed)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    labels = np.full(n, -1, dtype=np.int64)

    for _ in range(max_iters):
        # squared distances to every center, in one shot
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return labels, centers
