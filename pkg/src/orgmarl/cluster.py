"""Clustering primitives for trajectory mining: average-linkage
agglomerative clustering over a precomputed distance matrix, Lloyd's
k-means with k-means++ seeding, and silhouette scoring.

Everything is deterministic given the seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Merge:
    """One agglomeration: clusters `left` and `right` joined at `height`
    into a new cluster with id `new_id` and `size` leaves."""

    left: int
    right: int
    height: float
    new_id: int
    size: int


def average_linkage(dist: np.ndarray) -> list[Merge]:
    """Agglomerate n items into a dendrogram under average linkage.

    Leaves are 0..n-1; merge i creates cluster id n+i. Ties resolve to the
    first matrix position, so results are deterministic.
    """
    n = dist.shape[0]
    if dist.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if n == 0:
        return []
    d = dist.astype(float).copy()
    np.fill_diagonal(d, np.inf)
    row_cluster = list(range(n))  # row index -> live cluster id
    sizes = {i: 1 for i in range(n)}
    merges: list[Merge] = []
    for step in range(n - 1):
        flat = int(np.argmin(d))
        ra, rb = divmod(flat, n)
        if ra > rb:
            ra, rb = rb, ra
        height = float(d[ra, rb])
        a, b = row_cluster[ra], row_cluster[rb]
        new_id = n + step
        size = sizes[a] + sizes[b]
        merges.append(
            Merge(left=min(a, b), right=max(a, b), height=height, new_id=new_id, size=size)
        )
        # Lance-Williams average-linkage update into row ra; retire row rb.
        weight_a = sizes[a] / size
        weight_b = sizes[b] / size
        merged = weight_a * d[ra, :] + weight_b * d[rb, :]
        d[ra, :] = merged
        d[:, ra] = merged
        d[ra, ra] = np.inf
        d[rb, :] = np.inf
        d[:, rb] = np.inf
        row_cluster[ra] = new_id
        sizes[new_id] = size
    return merges


def cut_tree(merges: list[Merge], n: int, threshold: float) -> list[int]:
    """Flat cluster labels: merges strictly above the threshold are undone.

    Returns one label per leaf, relabeled to 0..k-1 in order of the
    smallest leaf index in each cluster.
    """
    parent = list(range(n + len(merges)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in merges:
        if m.height <= threshold:
            for child in (m.left, m.right):
                parent[find(child)] = m.new_id
    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)
    labels = [0] * n
    for new_label, root in enumerate(sorted(groups, key=lambda r: groups[r][0])):
        for leaf in groups[root]:
            labels[leaf] = new_label
    return labels


def _pairwise_sq(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (len(x), len(centers)), via dot products
    to keep memory linear in the point count."""
    x2 = (x * x).sum(axis=1)[:, None]
    c2 = (centers * centers).sum(axis=1)[None, :]
    d2 = x2 + c2 - 2.0 * (x @ centers.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans(
    x: np.ndarray, k: int, seed: int = 0, iterations: int = 100
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (labels, centers, inertia).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = random.Random(seed)
    centers = _kmeanspp(x, k, rng)
    labels = np.full(n, -1, dtype=int)
    for _round in range(iterations):
        new_labels = _pairwise_sq(x, centers).argmin(axis=1)
        if (new_labels == labels).all():
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    inertia = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def _kmeanspp(x: np.ndarray, k: int, rng: random.Random) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.randrange(n)]]
    while len(centers) < k:
        d2 = _pairwise_sq(x, np.array(centers)).min(axis=1)
        total = float(d2.sum())
        if total <= 0.0:
            centers.append(x[rng.randrange(n)])
            continue
        u = rng.random() * total
        acc = 0.0
        pick = n - 1
        for i in range(n):
            acc += float(d2[i])
            if u < acc:
                pick = i
                break
        centers.append(x[pick])
    return np.array(centers, dtype=float)


def silhouette(x: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient; 0.0 for a degenerate partition."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n = x.shape[0]
    unique = sorted(set(int(l) for l in labels))
    if len(unique) < 2 or n < 3:
        return 0.0
    dist = np.sqrt(_pairwise_sq(x, x))
    scores = []
    for i in range(n):
        own = labels == labels[i]
        own_count = int(own.sum())
        if own_count <= 1:
            scores.append(0.0)
            continue
        a = dist[i][own].sum() / (own_count - 1)
        b = min(
            dist[i][labels == other].mean() for other in unique if other != labels[i]
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0 else (b - a) / denom)
    return float(np.mean(scores))


def pick_k(x: np.ndarray, k_range: range = range(2, 9), seed: int = 0) -> int:
    """Best silhouette over the candidate range (bounded by sample count)."""
    n = x.shape[0]
    best_k = None
    best_score = None
    for k in k_range:
        if k >= n:
            break
        labels, _, _ = kmeans(x, k, seed=seed)
        score = silhouette(x, labels)
        if best_score is None or score > best_score + 1e-12:
            best_k = k
            best_score = score
    if best_k is None:
        best_k = min(2, n) if n else 0
    return best_k
