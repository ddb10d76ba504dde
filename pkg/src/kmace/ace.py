"""Average Central Error estimation and the two-index cluster-count selection.

For a cluster with ``n`` members whose scatter spectra are ``lam_i`` we write

* ``S = sum_i tr(lam_i)``
* ``Q = sum_i tr(lam_i^2)``
* ``P = sum_{i != k} tr(lam_i lam_k)`` (spectra paired in descending order)

and ``D`` for the squared norm of the centred true centres (the bias term).
The central error Z and the observable compactness Y then have

    E[Z] = D + S/n                 Var[Z] = 2/n^2 (Q + P)
    E[Y] = D + (n-1)/n S           Var[Y] = 2(n-1)^2/n^2 Q + 2/n^2 P + 4/(d n) D S

Requiring ``|E[Y] - y| <= alpha sqrt(Var[Y])`` and solving for ``D`` gives a
quadratic whose two roots bound ``D``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Dataset,
    NonPositiveAlpha,
    Partition,
    PartitionDatasetMismatch,
    RangeInvalid,
    RngSpec,
)
from .kmeans import DEFAULT_RESTARTS, kmeans
from .linalg import covariance, sym_eigenvalues

DEFAULT_ALPHA = 5.0
DEFAULT_BETA = 5.0
SENTINEL_FACTOR = 1e6


@dataclass(frozen=True)
class ClusterMoments:
    per_sample_trace: np.ndarray
    per_sample_trace_sq: np.ndarray
    cross_trace_sum: float
    n: int
    d: float

    @property
    def trace_sum(self) -> float:
        return float(self.per_sample_trace.sum())

    @property
    def trace_sq_sum(self) -> float:
        return float(self.per_sample_trace_sq.sum())

    @classmethod
    def from_spectra(cls, spectra, counts, d=None) -> "ClusterMoments":
        """Moments of a cluster whose members come in groups sharing one spectrum each.

        ``spectra[s]`` is the eigenvalue vector shared by ``counts[s]`` members.
        Spectra of different length are zero-padded before pairing.
        """
        counts = np.asarray(counts, dtype=np.int64)
        width = max((len(s) for s in spectra), default=0)
        lam = np.zeros((len(spectra), max(width, 1)))
        for i, s in enumerate(spectra):
            lam[i, :len(s)] = np.sort(np.asarray(s, dtype=np.float64))[::-1]
        tr = lam.sum(axis=1)
        tr2 = np.einsum("ij,ij->i", lam, lam)
        summed = counts @ lam
        cross = float(summed @ summed - counts @ tr2)
        return cls(
            per_sample_trace=np.repeat(tr, counts),
            per_sample_trace_sq=np.repeat(tr2, counts),
            cross_trace_sum=max(cross, 0.0),
            n=int(counts.sum()),
            d=float(d if d is not None else width),
        )

    @classmethod
    def shared(cls, spectrum, n: int, d=None) -> "ClusterMoments":
        return cls.from_spectra([spectrum], [n], d)


@dataclass(frozen=True)
class DeltaBound:
    lower: float
    upper: float
    discarded: bool
    y_bar: float
    k_term: float


@dataclass(frozen=True)
class AceBounds:
    mean: float
    variance: float
    lower: float
    upper: float
    beta: float
    mean_lower: float = 0.0
    discarded: bool = False
    delta: tuple = ()


def z_moments(cluster: ClusterMoments, delta_sq: float):
    n = cluster.n
    mean = delta_sq + cluster.trace_sum / n
    var = 2.0 / n**2 * (cluster.trace_sq_sum + cluster.cross_trace_sum)
    return mean, var


def y_moments(cluster: ClusterMoments, delta_sq: float):
    n, d = cluster.n, cluster.d
    s = cluster.trace_sum
    mean = delta_sq + (n - 1) / n * s
    var = (2.0 * (n - 1) ** 2 / n**2 * cluster.trace_sq_sum
           + 2.0 / n**2 * cluster.cross_trace_sum
           + 4.0 / (d * n) * delta_sq * s)
    return mean, var


def _delta_roots(n, d, s, q, p, y, alpha):
    """Vectorised Δ-bound roots; returns (lower, upper, centre, half_width, feasible)."""
    n = np.asarray(n, dtype=np.float64)
    g = (n - 1.0) / n * s
    v0 = 2.0 * (n - 1.0) ** 2 / n**2 * q + 2.0 / n**2 * p
    h = np.where(d > 0, 4.0 * s / (np.maximum(d, 1e-300) * n), 0.0)
    centre = (y - g) + 0.5 * alpha**2 * h
    # centre^2 - [(g - y)^2 - alpha^2 v0], expanded to avoid cancelling two large squares
    disc = alpha**2 * (v0 + h * (y - g) + 0.25 * alpha**2 * h * h)
    feasible = disc >= 0.0
    half = np.sqrt(np.where(feasible, disc, 0.0))
    upper = centre + half
    lower = np.maximum(centre - half, 0.0)
    feasible = feasible & (upper >= 0.0)
    return lower, upper, centre, half, feasible


def delta_bounds(cluster: ClusterMoments, y_mj: float, alpha: float = DEFAULT_ALPHA,
                 delta_max: float = np.inf) -> DeltaBound:
    """Bounds on the bias term from the observed compactness ``y_mj``.

    A cluster with no consistent bias value (negative upper root or no real
    root) is flagged ``discarded`` and its upper bound set to ``delta_max``.
    """
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
    lo, up, centre, half, ok = _delta_roots(
        cluster.n, cluster.d, cluster.trace_sum, cluster.trace_sq_sum,
        cluster.cross_trace_sum, float(y_mj), float(alpha))
    if not bool(ok):
        return DeltaBound(0.0, float(delta_max), True, float(centre), float(half))
    return DeltaBound(float(lo), float(up), False, float(centre), float(half))


def sentinel(samples: np.ndarray) -> float:
    tr = float(np.trace(covariance(samples)))
    return SENTINEL_FACTOR * (tr if tr > 0 else 1.0)


def cluster_spectra(samples: np.ndarray, partition: Partition):
    """Descending covariance spectrum of every cluster, as an (m, d) array."""
    d = samples.shape[1]
    lam = np.zeros((partition.m, d))
    for j in range(partition.m):
        members = samples[partition.assign == j]
        if members.shape[0] > 1:
            lam[j] = sym_eigenvalues(covariance(members)).eigenvalues
    return lam


def _cell(m_part: Partition, k_assign, lam_k, d, alpha, beta, delta_max):
    """z-bounds of one (m, k) cell from the contingency of the two assignments.

    ``lam_k`` holds one zero-padded descending spectrum per source cluster and
    ``d`` is either the common dimension or one value per source cluster.
    """
    n_total = m_part.n
    counts = np.zeros((m_part.m, lam_k.shape[0]))
    np.add.at(counts, (m_part.assign, k_assign), 1.0)
    tr = lam_k.sum(axis=1)
    tr2 = np.einsum("ij,ij->i", lam_k, lam_k)
    n = counts.sum(axis=1)
    s = counts @ tr
    q = counts @ tr2
    summed = counts @ lam_k
    p = np.maximum(np.einsum("ij,ij->i", summed, summed) - q, 0.0)
    y = np.asarray(m_part.compactness_per_cluster)
    if np.ndim(d):
        # per-source dimension (feature space): take the largest among contributing sources
        d = np.max(np.where(counts > 0, np.asarray(d, dtype=np.float64)[None, :], 0.0), axis=1)
    dl, du, _, _, ok = _delta_roots(n, d, s, q, p, y, alpha)
    var_z = float(np.sum(2.0 / n**2 * (q + p))) / n_total**2
    base = s / n
    mean_up = float(np.sum(du + base)) / n_total
    mean_lo = float(np.sum(dl + base)) / n_total
    sd = np.sqrt(var_z)
    discarded = not bool(ok.all())
    upper = delta_max if discarded else mean_up + beta * sd
    lower = mean_lo - beta * sd
    return AceBounds(
        mean=mean_up if not discarded else delta_max,
        variance=var_z,
        lower=lower,
        upper=upper,
        beta=beta,
        mean_lower=mean_lo,
        discarded=discarded,
        delta=tuple(zip(dl.tolist(), np.where(ok, du, delta_max).tolist(), (~ok).tolist())),
    )


def ace_bounds(m_partition: Partition, k_covariance_source: Partition, samples,
               alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
               delta_max: float | None = None, spectra=None) -> AceBounds:
    """Bounds on the Average Central Error of ``m_partition``.

    Every sample takes the covariance spectrum of the cluster it belongs to in
    ``k_covariance_source``. ``spectra`` may carry a precomputed
    :func:`cluster_spectra` result for that source.
    """
    samples = samples.samples if isinstance(samples, Dataset) else np.asarray(samples, dtype=np.float64)
    if m_partition.n != samples.shape[0] or k_covariance_source.n != samples.shape[0]:
        raise PartitionDatasetMismatch("partitions and dataset disagree on N")
    if not alpha > 0 or not beta > 0:
        raise NonPositiveAlpha("alpha and beta must be positive")
    if delta_max is None:
        delta_max = sentinel(samples)
    if spectra is None:
        spectra = cluster_spectra(samples, k_covariance_source)
    return _cell(m_partition, k_covariance_source.assign, spectra, samples.shape[1],
                 alpha, beta, delta_max)


SELECTION_RULES = ("band", "argmin")


@dataclass
class SelectionReport:
    m_range: tuple
    z_upper_surface: np.ndarray  # rows index m, columns index k
    z_lower_surface: np.ndarray
    z_std_surface: np.ndarray
    m_hat_of_k: np.ndarray
    discrepancy: np.ndarray
    k_star: int
    m_hat: int
    chosen_partition: Partition
    eligible: np.ndarray = None
    params: dict = field(default_factory=dict)
    partitions: dict = field(default_factory=dict, repr=False)

    @property
    def ms(self) -> np.ndarray:
        return np.arange(self.m_range[0], self.m_range[1] + 1)

    def z_curve(self, k: int | None = None) -> np.ndarray:
        """Upper ACE bound over m for a fixed covariance source (default ``k_star``)."""
        k = self.k_star if k is None else k
        return self.z_upper_surface[:, k - self.m_range[0]]

    def to_dict(self) -> dict:
        def clean(a):
            return [[None if not np.isfinite(v) else float(v) for v in row] for row in np.atleast_2d(a)]
        return {
            "m_range": [int(self.m_range[0]), int(self.m_range[1])],
            "z_upper_surface": clean(self.z_upper_surface),
            "z_lower_surface": clean(self.z_lower_surface),
            "z_std_surface": clean(self.z_std_surface),
            "m_hat_of_k": [int(v) for v in self.m_hat_of_k],
            "discrepancy": [None if not np.isfinite(v) else float(v) for v in self.discrepancy],
            "eligible": [bool(v) for v in self.eligible],
            "k_star": int(self.k_star),
            "m_hat": int(self.m_hat),
            "chosen_partition": self.chosen_partition.to_dict(),
            "params": self.params,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def select_from_surface(z_upper: np.ndarray, m_min: int, delta_max: float,
                        z_std: np.ndarray | None = None, beta: float = DEFAULT_BETA,
                        rule: str = "band"):
    """Pick ``m_hat_k`` per column, then ``k_star`` by the normalised discrepancy.

    ``rule="argmin"`` takes the plain column argmin and the smallest signed
    discrepancy. ``rule="band"`` (default) treats a cell as tied with the column
    minimiser ``b`` when ``z_upper[m] - z_upper[b] <= beta (std[m] + std[b])``
    and takes the smallest tied m; a column holding any discarded cell is left out of the k comparison, and
    ``k_star`` minimises the absolute discrepancy. Remaining ties go to the
    smallest index.

    Returns ``(m_hat_of_k, discrepancy, k_star, eligible)``.
    """
    if rule not in SELECTION_RULES:
        raise ValueError(f"unknown selection rule {rule!r}")
    z_upper = np.asarray(z_upper, dtype=np.float64)
    n_m, n_k = z_upper.shape
    cols = np.arange(n_k)
    dead = z_upper >= delta_max
    m_idx = np.argmin(z_upper, axis=0)
    if rule == "band":
        if z_std is None:
            raise ValueError("the band rule needs the std surface")
        z_std = np.asarray(z_std, dtype=np.float64)
        best = z_upper[m_idx, cols]
        half = beta * (z_std + z_std[m_idx, cols][None, :])
        tied = (z_upper - half <= best[None, :]) & ~dead
        m_idx = np.where(tied.any(axis=0), np.argmax(tied, axis=0), m_idx)
    chosen = z_upper[m_idx, cols]
    diag = np.array([z_upper[k, k] if k < n_m else np.inf for k in range(n_k)])
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = (chosen - diag) / chosen
    disc = np.where((chosen >= delta_max) | ~np.isfinite(disc), np.inf, disc)
    if rule == "band":
        eligible = ~dead.any(axis=0) & np.isfinite(disc)
        if not eligible.any():
            eligible = np.isfinite(disc)
        score = np.where(eligible, np.abs(disc), np.inf)
    else:
        eligible = np.isfinite(disc)
        score = disc
    k_idx = int(np.argmin(score)) if np.isfinite(score).any() else 0
    return m_idx + m_min, disc, k_idx + m_min, eligible


def select_cnc(data: Dataset, m_min: int = 1, m_max: int = 15,
               alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
               rng: RngSpec | None = None, restarts: int = DEFAULT_RESTARTS,
               partitions: dict | None = None, rule: str = "band") -> SelectionReport:
    """K-MACE: cluster for every m, score every (m, k) pair, and pick the count."""
    x = data.samples
    n = x.shape[0]
    if not (1 <= m_min <= m_max <= n):
        raise RangeInvalid(f"need 1 <= m_min <= m_max <= N, got [{m_min}, {m_max}] with N={n}")
    if not alpha > 0 or not beta > 0:
        raise NonPositiveAlpha("alpha and beta must be positive")
    rng = rng or RngSpec(0)
    ms = range(m_min, m_max + 1)
    if partitions is None:
        partitions = {m: kmeans(data, m, rng, restarts=restarts) for m in ms}
    delta_max = sentinel(x)
    spectra = {k: cluster_spectra(x, partitions[k]) for k in ms}
    surfaces = score_surface(partitions, ms, spectra, x.shape[1], alpha, beta, delta_max)
    return report_from_surface(surfaces, partitions, m_min, m_max, beta, delta_max, rule,
                               {"method": "kmace", "alpha": alpha, "beta": beta,
                                "restarts": restarts, "rng": rng.to_dict(), "rule": rule})


def score_surface(partitions: dict, ms, spectra: dict, dims, alpha, beta, delta_max):
    """Upper bound, lower bound and Z std for every (m, k) cell.

    ``spectra[k]`` is the per-cluster spectrum array of the k-partition and
    ``dims`` either a common dimension or a mapping ``k -> per-cluster dims``.
    """
    ms = list(ms)
    size = len(ms)
    z_up, z_lo, z_sd = (np.empty((size, size)) for _ in range(3))
    for ki, k in enumerate(ms):
        d = dims[k] if isinstance(dims, dict) else dims
        for mi, m in enumerate(ms):
            b = _cell(partitions[m], partitions[k].assign, spectra[k], d, alpha, beta, delta_max)
            z_up[mi, ki] = b.upper
            z_lo[mi, ki] = b.lower
            z_sd[mi, ki] = np.sqrt(b.variance)
    return z_up, z_lo, z_sd


def report_from_surface(surfaces, partitions, m_min, m_max, beta, delta_max, rule, params):
    z_up, z_lo, z_sd = surfaces
    m_hat_of_k, disc, k_star, eligible = select_from_surface(z_up, m_min, delta_max, z_sd, beta, rule)
    m_hat = int(m_hat_of_k[k_star - m_min])
    return SelectionReport(
        m_range=(m_min, m_max),
        z_upper_surface=z_up,
        z_lower_surface=z_lo,
        z_std_surface=z_sd,
        m_hat_of_k=m_hat_of_k,
        discrepancy=disc,
        k_star=k_star,
        m_hat=m_hat,
        chosen_partition=partitions[m_hat],
        eligible=eligible,
        params={**params, "delta_max": delta_max},
        partitions=partitions,
    )
