"""Gaussian-kernel K-means and the feature-space K-MACE selection with sigma tuning."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .ace import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    SENTINEL_FACTOR,
    SelectionReport,
    report_from_surface,
    score_surface,
)
from .core import (
    Dataset,
    DatasetTooLarge,
    NonPositiveAlpha,
    NonPositiveSigma,
    RangeInvalid,
    RngSpec,
    TooManyClusters,
    make_partition,
)
from .kmeans import DEFAULT_RESTARTS, kmeans
from .linalg import pairwise_sq_dists

MAX_N = 20000
DEFF_RTOL = 1e-10
DEFAULT_GRID_SIZE = 20
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    sigma: float
    kind: str = "gaussian"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def sq_dists(self) -> np.ndarray:
        """Feature-space squared distances ``K_ii + K_jj - 2 K_ij``."""
        k = self.values
        diag = np.diag(k)
        return np.maximum(diag[:, None] + diag[None, :] - 2.0 * k, 0.0)


def _check_size(n: int) -> None:
    if n > MAX_N:
        raise DatasetTooLarge(f"N={n} exceeds the dense Gram limit of {MAX_N}")


def gram_from_sq_dists(d2: np.ndarray, sigma: float) -> GramMatrix:
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    k = np.exp(-d2 / (2.0 * sigma * sigma))
    k.flags.writeable = False
    return GramMatrix(k, float(sigma))


def gram(data: Dataset | np.ndarray, sigma: float) -> GramMatrix:
    """Gaussian Gram matrix ``exp(-|x_i - x_j|^2 / (2 sigma^2))``."""
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    _check_size(x.shape[0])
    return gram_from_sq_dists(pairwise_sq_dists(x), sigma)


def linear_gram(data: Dataset | np.ndarray) -> GramMatrix:
    """Linear kernel on centred data; a test hook tying kernel K-means to plain K-means."""
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    _check_size(x.shape[0])
    xc = x - x.mean(axis=0)
    k = xc @ xc.T
    k = 0.5 * (k + k.T)
    k.flags.writeable = False
    return GramMatrix(k, float("nan"), "linear")


def farthest_first_seeds(g: GramMatrix, m: int) -> np.ndarray:
    """Seed indices: the farthest feature-space pair, then repeated max-min picks."""
    n = g.n
    if m < 1 or m > n:
        raise TooManyClusters(f"m={m} must lie in [1, {n}]")
    if m == 1:
        return np.array([0])
    d2 = g.sq_dists()
    flat = int(np.argmax(d2))
    seeds = [flat // n, flat % n]
    seeds.sort()
    closest = np.minimum(d2[seeds[0]], d2[seeds[1]])
    closest[seeds] = -1.0
    while len(seeds) < m:
        nxt = int(np.argmax(closest))
        seeds.append(nxt)
        closest = np.minimum(closest, d2[nxt])
        closest[seeds] = -1.0
    return np.array(seeds)


def assign_to_seeds(g: GramMatrix, seeds: np.ndarray) -> np.ndarray:
    k = g.values
    diag = np.diag(k)
    d2 = diag[:, None] + diag[seeds][None, :] - 2.0 * k[:, seeds]
    assign = np.argmin(d2, axis=1)
    assign[seeds] = np.arange(len(seeds))
    return assign


def initial_assignment(g: GramMatrix, m: int) -> np.ndarray:
    """Deterministic max-min seeding in feature space; every other point joins its nearest seed."""
    if m == 1:
        return np.zeros(g.n, dtype=np.int64)
    return assign_to_seeds(g, farthest_first_seeds(g, m))


def _feature_terms(k: np.ndarray, assign: np.ndarray, m: int):
    """Per-point kernel sums to each cluster, cluster sizes and within-cluster kernel sums."""
    onehot = np.zeros((k.shape[0], m))
    onehot[np.arange(k.shape[0]), assign] = 1.0
    kh = k @ onehot
    sizes = onehot.sum(axis=0)
    within = np.einsum("ij,ij->j", onehot, kh)
    return kh, sizes, within


def kernel_kmeans(g: GramMatrix, m: int, rng: RngSpec | None = None,
                  max_iter: int = DEFAULT_MAX_ITER, init=None):
    """Kernel K-means by the kernel trick.

    Starts from ``init`` (an assignment) or, by default, from
    :func:`initial_assignment`; ``init="random"`` draws a uniform assignment
    from ``rng``. Returns a Partition whose centres are input-space means of
    members (filled in by the caller when samples are known) and whose
    compactness is the feature-space value.
    """
    n = g.n
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > n:
        raise TooManyClusters(f"m={m} exceeds N={n}")
    k = g.values
    diag = np.diag(k)
    if init is None:
        assign = initial_assignment(g, m)
    elif isinstance(init, str) and init == "random":
        gen = (rng or RngSpec(0)).child(f"kernel-kmeans/m={m}").generator()
        assign = gen.integers(m, size=n)
        assign[gen.permutation(n)[:m]] = np.arange(m)
    else:
        assign = np.asarray(init, dtype=np.int64).copy()
    trace = []
    it = 0
    rows = np.arange(n)
    kh, sizes, _ = _feature_terms(k, assign, m)
    for it in range(1, max_iter + 1):
        within = np.bincount(assign, weights=kh[rows, assign], minlength=m)
        safe = np.maximum(sizes, 1.0)
        dist = diag[:, None] - 2.0 * kh / safe + (within / safe**2)[None, :]
        dist[:, sizes == 0] = np.inf
        cur = dist[rows, assign]
        trace.append(float(np.sum(cur)))
        new = np.argmin(dist, axis=1)
        # keep the current label on exact ties so the objective cannot oscillate
        new = np.where(dist[rows, new] < cur, new, assign)
        new = _repair_empty(new, dist, m)
        moved = np.flatnonzero(new != assign)
        if moved.size == 0:
            break
        # only moved points change the per-cluster kernel sums
        step = np.zeros((moved.size, m))
        step[np.arange(moved.size), new[moved]] += 1.0
        step[np.arange(moved.size), assign[moved]] -= 1.0
        kh += k[:, moved] @ step
        sizes += step.sum(axis=0)
        assign = new
    # kh is kept exact by the incremental updates, so no fresh product is needed
    within = np.bincount(assign, weights=kh[rows, assign], minlength=m)
    per = np.zeros(m)
    np.add.at(per, assign, diag)
    per = np.maximum(per - within / np.maximum(sizes, 1.0), 0.0)
    return assign, per, it, trace


def _repair_empty(assign, dist, m):
    for _ in range(m):
        sizes = np.bincount(assign, minlength=m)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        own = dist[np.arange(len(assign)), assign].copy()
        own[sizes[assign] <= 1] = -1.0
        far = int(np.argmax(own))
        assign[far] = empty[0]
    return assign


def kernel_partition(g: GramMatrix, samples: np.ndarray, m: int, rng: RngSpec | None = None,
                     max_iter: int = DEFAULT_MAX_ITER, init=None):
    assign, per, iters, trace = kernel_kmeans(g, m, rng, max_iter, init)
    return make_partition(samples, assign, m, compactness=per, iterations=iters, objective_trace=trace)


def cluster_feature_spectrum(k_block: np.ndarray):
    """Descending feature-space scatter spectrum of one cluster and its effective dimension."""
    n = k_block.shape[0]
    if n < 2:
        return np.zeros(1), 1
    row = k_block.mean(axis=0)
    kc = k_block - row[None, :] - row[:, None] + row.mean()
    kc = 0.5 * (kc + kc.T)
    ev = scipy.linalg.eigh(kc, eigvals_only=True, driver="evr")[::-1] / (n - 1)
    ev = np.where(ev > 0.0, ev, 0.0)
    top = ev[0] if ev.size else 0.0
    if top <= 0.0:
        return np.zeros(1), 1
    ev = ev[ev > DEFF_RTOL * top]
    # participation ratio: the many tiny eigenvalues of a smooth kernel barely count
    d_eff = max(1, int(round(ev.sum() ** 2 / np.dot(ev, ev))))
    return ev, d_eff


def feature_spectra(g: GramMatrix, assign: np.ndarray, m: int, cache: dict | None = None):
    """Zero-padded (m, w) spectrum array and per-cluster effective dimensions.

    ``cache`` maps member-index bytes to a computed spectrum so clusters shared
    between partitions of the same Gram matrix are decomposed once.
    """
    specs, dims = [], []
    for j in range(m):
        idx = np.flatnonzero(assign == j)
        key = idx.tobytes()
        if cache is not None and key in cache:
            ev, d_eff = cache[key]
        else:
            ev, d_eff = cluster_feature_spectrum(g.values[np.ix_(idx, idx)])
            if cache is not None:
                cache[key] = (ev, d_eff)
        specs.append(ev)
        dims.append(d_eff)
    width = max(len(s) for s in specs)
    lam = np.zeros((m, width))
    for j, s in enumerate(specs):
        lam[j, :len(s)] = s
    return lam, np.array(dims, dtype=np.float64)


def feature_space_moments(g: GramMatrix, partition):
    """Per-cluster ClusterMoments in feature space (shared spectrum, ``d = d_eff``)."""
    from .ace import ClusterMoments

    lam, dims = feature_spectra(g, partition.assign, partition.m)
    return [ClusterMoments.shared(lam[j], int(partition.sizes[j]), dims[j]) for j in range(partition.m)]


@dataclass
class SigmaSweep:
    grid: np.ndarray
    min_upper_z: np.ndarray
    m_hat_per_sigma: np.ndarray
    score: np.ndarray
    sigma_hat: float
    peak_index: int
    fallback: bool = False
    reports: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in a]
        return {
            "grid": [float(v) for v in self.grid],
            "min_upper_z": clean(self.min_upper_z),
            "m_hat_per_sigma": [int(v) for v in self.m_hat_per_sigma],
            "score": clean(self.score),
            "sigma_hat": float(self.sigma_hat),
            "peak_index": int(self.peak_index),
            "fallback": bool(self.fallback),
        }

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "min_upper_z"])
            for s, f in zip(self.grid, self.min_upper_z):
                w.writerow([repr(float(s)), repr(float(f))])


def default_sigma_grid(samples: np.ndarray, size: int = DEFAULT_GRID_SIZE, d2=None) -> np.ndarray:
    """``size`` evenly spaced widths from 0.1 x median to 2 x max pairwise distance."""
    if d2 is None:
        d2 = pairwise_sq_dists(samples)
    dist = np.sqrt(d2[np.triu_indices(d2.shape[0], 1)])
    dist = dist[dist > 0]
    if dist.size == 0:
        return np.array([1.0])
    return np.linspace(0.1 * np.median(dist), 2.0 * dist.max(), size)


def pick_sigma(f: np.ndarray):
    """Index of the chosen width from the min-ACE curve ``f``.

    Returns ``(index, peak, score, fallback)``. After the first maximum ``p``
    every interior point scores ``|f[k] - f[k-1]| + |f[k+1] - f[k]|``; with fewer
    than three points past the peak the smallest ``f`` beyond it is used.
    """
    f = np.asarray(f, dtype=np.float64)
    size = len(f)
    score = np.full(size, np.nan)
    if size == 1:
        return 0, 0, score, False
    finite = np.where(np.isfinite(f), f, -np.inf)
    p = int(np.argmax(finite))
    if size - 1 - p < 3:
        tail = np.arange(p + 1, size)
        if tail.size == 0:
            return p, p, score, True
        return int(tail[np.argmin(f[tail])]), p, score, True
    for k in range(p + 1, size - 1):
        score[k] = abs(f[k] - f[k - 1]) + abs(f[k + 1] - f[k])
    return int(np.nanargmax(score)), p, score, False


def _best_partition(g: GramMatrix, x: np.ndarray, m: int, inits, max_iter: int):
    """Kernel K-means from each start; keep the lowest feature-space objective."""
    best = None
    for init in inits:
        part = kernel_partition(g, x, m, max_iter=max_iter, init=init)
        if best is None or part.compactness_total < best.compactness_total - 1e-12:
            best = part
    return best


def select_at_sigma(data: Dataset, g: GramMatrix, m_min: int, m_max: int,
                    alpha: float, beta: float, rule: str = "band",
                    max_iter: int = DEFAULT_MAX_ITER, params: dict | None = None,
                    warm_starts: dict | None = None) -> SelectionReport:
    """Feature-space K-MACE at one kernel width.

    Every ``m`` starts from the max-min seeding and, when given, from
    ``warm_starts[m]`` (an assignment); the start with the lower feature-space
    objective wins.
    """
    x = data.samples
    ms = range(m_min, m_max + 1)
    seeds = farthest_first_seeds(g, m_max) if m_max > 1 else np.array([0])
    warm_starts = warm_starts or {}
    partitions = {}
    for m in ms:
        if m == 1:
            inits = [np.zeros(g.n, dtype=np.int64)]
        else:
            inits = [assign_to_seeds(g, seeds[:m])]
            if m in warm_starts:
                inits.append(np.asarray(warm_starts[m], dtype=np.int64))
        partitions[m] = _best_partition(g, x, m, inits, max_iter)
    spectra, dims, cache = {}, {}, {}
    for k in ms:
        spectra[k], dims[k] = feature_spectra(g, partitions[k].assign, k, cache)
    # tr of the centred Gram over N plays the role of the global covariance trace
    total = float(np.trace(g.values) - g.values.mean() * g.n) / max(g.n - 1, 1)
    delta_max = SENTINEL_FACTOR * (total if total > 0 else 1.0)
    surfaces = score_surface(partitions, ms, spectra, dims, alpha, beta, delta_max)
    return report_from_surface(surfaces, partitions, m_min, m_max, beta, delta_max, rule,
                               dict(params or {}, sigma=g.sigma))


def kernel_select_cnc(data: Dataset, m_min: int = 1, m_max: int = 15, sigma_grid=None,
                      alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                      rng: RngSpec | None = None, rule: str = "band",
                      max_iter: int = DEFAULT_MAX_ITER, warm_restarts: int = DEFAULT_RESTARTS):
    """Kernel K-MACE over a grid of Gaussian widths.

    Returns the SelectionReport at the chosen width and the SigmaSweep.
    Kernel K-means runs from the max-min seeding and from the input-space
    K-means partition (seeded by ``rng``) for each ``m``.
    """
    x = data.samples
    n = x.shape[0]
    _check_size(n)
    if not (1 <= m_min <= m_max <= n):
        raise RangeInvalid(f"need 1 <= m_min <= m_max <= N, got [{m_min}, {m_max}] with N={n}")
    if not alpha > 0 or not beta > 0:
        raise NonPositiveAlpha("alpha and beta must be positive")
    rng = rng or RngSpec(0)
    d2 = pairwise_sq_dists(x)
    grid = default_sigma_grid(x, d2=d2) if sigma_grid is None else np.asarray(sigma_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise RangeInvalid("sigma grid must be a non-empty 1-D array")
    if np.any(grid <= 0):
        raise NonPositiveSigma("every sigma must be positive")
    if np.any(np.diff(grid) <= 0):
        raise RangeInvalid("sigma grid must be strictly ascending")
    params = {"method": "kernel-kmace", "alpha": alpha, "beta": beta, "rng": rng.to_dict(),
              "rule": rule, "max_iter": max_iter, "warm_restarts": warm_restarts}
    warm = {m: kmeans(x, m, rng, restarts=warm_restarts).assign for m in range(max(m_min, 2), m_max + 1)}
    reports, f = [], []
    for sigma in grid:
        rep = select_at_sigma(data, gram_from_sq_dists(d2, sigma), m_min, m_max, alpha, beta,
                              rule, max_iter, params, warm)
        reports.append(rep)
        curve = rep.z_curve()
        live = curve[curve < rep.params["delta_max"]]
        f.append(float(live.min()) if live.size else np.inf)
    f = np.array(f)
    idx, peak, score, fallback = pick_sigma(f)
    chosen = reports[idx]
    chosen.params = dict(chosen.params, sigma_hat=float(grid[idx]), sigma_grid=[float(s) for s in grid],
                         sigma_fallback=bool(fallback))
    sweep = SigmaSweep(grid=grid, min_upper_z=f, m_hat_per_sigma=np.array([r.m_hat for r in reports]),
                       score=score, sigma_hat=float(grid[idx]), peak_index=peak, fallback=fallback,
                       reports=reports)
    return chosen, sweep


def sweep_json(report: SelectionReport, sweep: SigmaSweep, **kw) -> str:
    return json.dumps({"report": report.to_dict(), "sigma_sweep": sweep.to_dict()}, sort_keys=True, **kw)
