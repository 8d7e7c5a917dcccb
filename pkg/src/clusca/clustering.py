"""Lloyd K-Means with seeded init, warm starts, and partition diagnostics.

The clustering here runs inside the sampling hot path, so everything is
deterministic: D-squared seeding draws from a dedicated stream, assignment
ties break toward the lowest centroid index, and empty clusters are repaired
by re-seeding onto the point farthest from its nearest centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import SeededRng


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray          # (T,) int, cluster id per point
    centroids: np.ndarray       # (K, D)
    iterations: int
    inertia: float              # final within-cluster sum of squares
    inertia_history: tuple      # WCSS after each assignment, non-increasing


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (T, K) squared Euclidean distances; clipped so roundoff cannot go negative.
    p2 = np.sum(points * points, axis=1)[:, None]
    c2 = np.sum(centroids * centroids, axis=1)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centroids.T
    return np.maximum(d2, 0.0)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, which is the tie rule we want.
    return np.argmin(_sq_dists(points, centroids), axis=1)


def _wcss(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def _plusplus_init(points: np.ndarray, k: int, rng: SeededRng) -> np.ndarray:
    """Standard D-squared seeding. Collapses deterministically on duplicates."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    if k == 1:
        return centroids
    d2 = _sq_dists(points, centroids[:1]).ravel()
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # Remaining mass is zero (identical points): re-seed the rest on
            # the first point; ties then collapse to a single effective cluster.
            centroids[j:] = points[0]
            break
        idx = rng.choice_weighted(n, d2)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, _sq_dists(points, centroids[j : j + 1]).ravel())
    return centroids


def _repair_empty(points, labels, centroids, counts):
    """Move each empty cluster's centroid onto the point farthest from its
    nearest centroid, excluding points already used for repair this pass."""
    taken: set[int] = set()
    for c in np.flatnonzero(counts == 0):
        min_d2 = _sq_dists(points, centroids).min(axis=1)
        for idx in taken:
            min_d2[idx] = -1.0
        far = int(np.argmax(min_d2))
        centroids[c] = points[far]
        taken.add(far)
    return centroids


def kmeans(
    points,
    k: int,
    *,
    rng: SeededRng | None = None,
    warm_start: np.ndarray | None = None,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> KMeansResult:
    """Lloyd iterations until the max centroid shift drops below tol, the
    assignment stops changing, or max_iters is reached.

    Exactly one of rng (fresh D-squared seeding) or warm_start (centroids
    carried over from a previous clustering, same k) selects the init.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ShapeError(f"points must be (T, D) with T >= 1, got {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}", field="k")
    if k > n:
        raise ConfigError(f"k = {k} exceeds the number of points {n}", field="k")
    if max_iters < 1:
        raise ConfigError(f"max_iters must be >= 1, got {max_iters}", field="max_iters")

    if warm_start is not None:
        centroids = np.array(warm_start, dtype=np.float64, copy=True)
        if centroids.shape != (k, points.shape[1]):
            raise ShapeError(
                f"warm-start centroids shape {centroids.shape} does not match "
                f"(k={k}, D={points.shape[1]})"
            )
    else:
        if rng is None:
            raise ConfigError("kmeans needs an rng stream when no warm start is given")
        centroids = _plusplus_init(points, k, rng)

    labels = _assign(points, centroids)
    history = [_wcss(points, labels, centroids)]
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        new_centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1.0), centroids)
        new_centroids = _repair_empty(points, labels, new_centroids, counts)
        shift = float(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1)).max())
        centroids = new_centroids
        new_labels = _assign(points, centroids)
        w = _wcss(points, new_labels, centroids)
        if w > history[-1] + 1e-9 * max(1.0, abs(history[-1])):
            raise RuntimeError(f"WCSS increased between iterations: {history[-1]} -> {w}")
        history.append(w)
        changed = bool(np.any(new_labels != labels))
        labels = new_labels
        if not changed or shift < tol:
            break

    # Final means so non-empty centroids match their members exactly.
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1.0), centroids)
    inertia = _wcss(points, labels, centroids)
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        iterations=iterations,
        inertia=inertia,
        inertia_history=tuple(history),
    )


def select_representatives(labels, k: int, rng: SeededRng) -> np.ndarray:
    """One uniformly drawn member index per non-empty cluster, ascending."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    reps = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        reps.append(int(members[int(rng.integers(members.size))]))
    return np.array(sorted(reps), dtype=np.intp)


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two partitions of the same items.

    Computed with exact integer pair counts and a single final division, so
    rational values like -0.5 come out exact. Two trivial partitions (both a
    single cluster, or both all singletons) score 1.0 by convention.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise ShapeError(f"label lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ShapeError("cannot compare empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = int(ai.max()) + 1, int(bi.max()) + 1
    cont = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(cont, (ai, bi), 1)

    def comb2(x):
        return (x * (x - 1)) // 2

    n = int(a.size)
    sum_cells = int(comb2(cont).sum())
    sum_a = int(comb2(cont.sum(axis=1)).sum())
    sum_b = int(comb2(cont.sum(axis=0)).sum())
    total = comb2(n)
    # ARI = (sum_cells - sum_a*sum_b/total) / ((sum_a+sum_b)/2 - sum_a*sum_b/total),
    # cleared of fractions so the division below is the only float operation.
    num = 2 * total * sum_cells - 2 * sum_a * sum_b
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        return 1.0
    return num / den


@dataclass(frozen=True)
class DistanceStats:
    intra_mean: float
    global_mean: float
    ratio: float


def distance_stats(points, labels) -> DistanceStats:
    """Mean within-cluster pairwise distance vs. the all-pairs mean.

    Clusters with fewer than two members contribute no intra pairs; with no
    intra pairs at all, intra_mean is 0.0, and a 0/0 ratio is reported as 0.0.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    if points.ndim != 2 or points.shape[0] < 2:
        raise ShapeError(f"need at least two points, got shape {points.shape}")
    if labels.size != points.shape[0]:
        raise ShapeError(f"labels length {labels.size} does not match {points.shape[0]} points")
    d2 = _sq_dists(points, points)
    iu = np.triu_indices(points.shape[0], k=1)
    dists = np.sqrt(d2[iu])
    same = labels[iu[0]] == labels[iu[1]]
    global_mean = float(dists.mean())
    intra_mean = float(dists[same].mean()) if np.any(same) else 0.0
    ratio = 0.0 if global_mean == 0.0 and intra_mean == 0.0 else (
        intra_mean / global_mean if global_mean > 0.0 else float("inf")
    )
    return DistanceStats(intra_mean=intra_mean, global_mean=global_mean, ratio=ratio)
