"""Lloyd's K-means with k-means++ seeding and best-of-restarts selection."""

from __future__ import annotations

import numpy as np

from .core import Dataset, Partition, RngSpec, TooManyClusters, make_partition

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300


def _sq_dists_to(x: np.ndarray, x_sq: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = x_sq[:, None] - 2.0 * (x @ centers.T) + np.einsum("ij,ij->i", centers, centers)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``m`` seed indices with squared-distance-proportional sampling."""
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    closest = np.einsum("ij,ij->i", x - x[idx[0]], x - x[idx[0]])
    for _ in range(1, m):
        total = closest.sum()
        if total <= 0.0:
            # every remaining point coincides with a seed; take unused indices in order
            unused = np.setdiff1d(np.arange(n), idx)
            nxt = int(unused[0])
        else:
            nxt = int(rng.choice(n, p=closest / total))
        idx.append(nxt)
        diff = x - x[nxt]
        closest = np.minimum(closest, np.einsum("ij,ij->i", diff, diff))
    return np.array(idx)


def _repair_empty(x, assign, centers, m):
    """Give every empty cluster the point farthest from its current centre."""
    for _ in range(m):
        sizes = np.bincount(assign, minlength=m)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        resid = x - centers[assign]
        dist = np.einsum("ij,ij->i", resid, resid)
        # a donor must keep at least one member
        dist[sizes[assign] <= 1] = -1.0
        far = int(np.argmax(dist))
        assign[far] = empty[0]
        centers[empty[0]] = x[far]
    return assign


def _centers_of(x, assign, m, prev):
    sizes = np.bincount(assign, minlength=m)
    sums = np.zeros((m, x.shape[1]))
    np.add.at(sums, assign, x)
    centers = prev.copy()
    nz = sizes > 0
    centers[nz] = sums[nz] / sizes[nz, None]
    return centers


def lloyd(x: np.ndarray, init_centers: np.ndarray, max_iter: int = DEFAULT_MAX_ITER):
    """Run Lloyd iterations from given centres.

    Returns ``(assign, iterations, objective_trace)`` where the trace holds the
    within-cluster sum of squares after every update step.
    """
    m = init_centers.shape[0]
    x_sq = np.einsum("ij,ij->i", x, x)
    centers = np.array(init_centers, dtype=np.float64)
    assign = None
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists_to(x, x_sq, centers), axis=1)
        new = _repair_empty(x, new, centers, m)
        changed = assign is None or not np.array_equal(new, assign)
        assign = new
        centers = _centers_of(x, assign, m, centers)
        resid = x - centers[assign]
        trace.append(float(np.einsum("ij,ij->", resid, resid)))
        if not changed:
            break
    return assign, it, trace


def kmeans(data: Dataset | np.ndarray, m: int, rng: RngSpec | None = None,
           restarts: int = DEFAULT_RESTARTS, max_iter: int = DEFAULT_MAX_ITER) -> Partition:
    """Cluster into exactly ``m`` groups, keeping the restart with least within-cluster SS."""
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > n:
        raise TooManyClusters(f"m={m} exceeds N={n}")
    gen = (rng or RngSpec(0)).child(f"kmeans/m={m}").generator()
    best = None
    for _ in range(max(1, restarts)):
        seeds = kmeans_plusplus(x, m, gen)
        assign, iters, trace = lloyd(x, x[seeds], max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (assign, iters, trace)
        if m == 1 or m == n:
            break
    assign, iters, trace = best
    return make_partition(x, assign, m, iterations=iters, objective_trace=trace)


def compactness(partition: Partition, samples: np.ndarray):
    """Per-cluster summed squared error to the cluster mean, and its total over N."""
    m = partition.m
    assign = partition.assign
    sizes = np.bincount(assign, minlength=m)
    sums = np.zeros((m, samples.shape[1]))
    np.add.at(sums, assign, samples)
    centers = sums / np.maximum(sizes, 1)[:, None]
    resid = samples - centers[assign]
    per = np.bincount(assign, weights=np.einsum("ij,ij->i", resid, resid), minlength=m)
    return per, float(per.sum() / samples.shape[0])
