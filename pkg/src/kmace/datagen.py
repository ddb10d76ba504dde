"""Seeded Gaussian-mixture generators for the S and U experiment families."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .core import CovarianceNotPSD, Dataset, RngSpec, UnknownScenario, validate_dataset

U_VARIANTS = {
    # name: (covariance kind, hypercube side, overlap)
    "u1": ("same", 10.0, "minor"),
    "u2": ("same", 8.0, "major"),
    "u3": ("varying", 10.0, "minor"),
    "u4": ("varying", 8.0, "major"),
    "u5": ("correlated", 10.0, "minor"),
    "u6": ("correlated", 8.0, "major"),
}
U_DIM = 10
U_COUNT = 100
U_MAX_STD = 0.29

SCENARIOS = ("s1", "s2", "s3", "s4", "u_family") + tuple(U_VARIANTS)

# bands on min centre distance / summed std along the joining direction
OVERLAP_BANDS = {"none": (6.0, np.inf), "minor": (2.0, 4.0), "major": (0.0, 2.0)}


@dataclass(frozen=True)
class MixtureSpec:
    centers: np.ndarray
    covariances: np.ndarray
    counts: np.ndarray
    rng: RngSpec
    name: str = "mixture"

    def __post_init__(self):
        if len(self.centers) != len(self.covariances) or len(self.centers) != len(self.counts):
            raise ValueError("centers, covariances and counts must have one entry per cluster")
        if np.any(np.asarray(self.counts) < 1):
            raise ValueError("every cluster needs at least one sample")

    @property
    def n(self) -> int:
        return int(np.sum(self.counts))

    @property
    def d(self) -> int:
        return int(np.shape(self.centers)[1])

    @property
    def m(self) -> int:
        return len(self.counts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "centers": np.asarray(self.centers).tolist(),
            "covariances": np.asarray(self.covariances).tolist(),
            "counts": [int(c) for c in self.counts],
            "rng": self.rng.to_dict(),
        }


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    if w.min(initial=0.0) < -1e-12 * max(abs(w).max(initial=0.0), 1e-300):
        raise CovarianceNotPSD(f"covariance has eigenvalue {w.min():.3e}")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_mixture(spec: MixtureSpec) -> Dataset:
    """Draw ``counts[j]`` samples around each centre with its Gaussian scatter."""
    covs = np.asarray(spec.covariances, dtype=np.float64)
    if not np.allclose(covs, np.transpose(covs, (0, 2, 1)), rtol=0, atol=1e-12):
        raise CovarianceNotPSD("covariance matrices must be symmetric")
    factors = [_factor(c) for c in covs]
    gen = spec.rng.generator()
    blocks, labels = [], []
    for j, (c, f, cnt) in enumerate(zip(np.asarray(spec.centers, dtype=np.float64), factors, spec.counts)):
        z = gen.standard_normal((int(cnt), spec.d))
        blocks.append(c + z @ f.T)
        labels.append(np.full(int(cnt), j))
    return validate_dataset(np.vstack(blocks), np.concatenate(labels), spec.name)


def rotated_cov(axis_std, angle_deg) -> np.ndarray:
    t = np.deg2rad(angle_deg)
    r = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return r @ np.diag(np.square(axis_std)) @ r.T


def overlap_ratio(centers, covariances) -> np.ndarray:
    """Pairwise centre distance over the summed scatter std along the joining direction."""
    centers = np.asarray(centers, dtype=np.float64)
    m = len(centers)
    out = np.full((m, m), np.inf)
    for a in range(m):
        for b in range(a + 1, m):
            diff = centers[b] - centers[a]
            dist = np.linalg.norm(diff)
            u = diff / dist
            spread = np.sqrt(u @ covariances[a] @ u) + np.sqrt(u @ covariances[b] @ u)
            out[a, b] = out[b, a] = dist / spread if spread > 0 else np.inf
    return out


@lru_cache(maxsize=1)
def _fixtures() -> dict:
    text = resources.files("kmace").joinpath("fixtures/scenarios.json").read_text()
    return json.loads(text)


def fixture_version() -> int:
    return int(_fixtures()["version"])


def _s_spec(name: str, rng: RngSpec) -> MixtureSpec:
    fx = _fixtures()["scenarios"][name]
    covs = np.array([rotated_cov(s, a) for s, a in zip(fx["axis_std"], fx["angle_deg"])])
    centers = np.array(fx["centers"], dtype=np.float64)
    lo, hi = OVERLAP_BANDS[fx["overlap"]]
    ratio = overlap_ratio(centers, covs).min()
    if not lo <= ratio <= hi:
        raise AssertionError(f"{name}: overlap ratio {ratio:.2f} outside {fx['overlap']} band")
    if name == "s1":
        dist = np.sqrt(((centers[:, None] - centers[None]) ** 2).sum(-1))
        dist[np.diag_indices(len(centers))] = np.inf
        max_std = np.sqrt(max(np.linalg.eigvalsh(c).max() for c in covs))
        assert dist.min() > 6.0 * max_std
    return MixtureSpec(centers, covs, np.array(fx["counts"]), rng.child(f"scatter/{name}"), name)


def _u_spec(variant: str, rng: RngSpec) -> MixtureSpec:
    kind, side, _ = U_VARIANTS[variant]
    gen = rng.child(f"centers/{variant}").generator()
    m = 9
    centers = gen.uniform(0.0, side, size=(m, U_DIM))
    if kind == "same":
        covs = np.array([np.eye(U_DIM) * 0.25**2] * m)
    elif kind == "varying":
        stds = gen.uniform(0.1, U_MAX_STD, size=m)
        covs = np.array([np.eye(U_DIM) * s**2 for s in stds])
    else:
        covs = []
        for _ in range(m):
            q, _r = np.linalg.qr(gen.standard_normal((U_DIM, U_DIM)))
            axis = gen.uniform(0.1, U_MAX_STD, size=U_DIM)
            c = q @ np.diag(axis**2) @ q.T
            covs.append(0.5 * (c + c.T))
        covs = np.array(covs)
    counts = np.full(m, U_COUNT)
    return MixtureSpec(centers, covs, counts, rng.child(f"scatter/{variant}"), variant)


def scenario(name: str, rng: RngSpec | None = None, variant: str | None = None) -> MixtureSpec:
    """Mixture spec for one of the named experiment families.

    ``u_family`` needs ``variant`` in ``u1``..``u6``; the variants may also be
    requested directly by name.
    """
    rng = rng or RngSpec(0)
    key = name.lower()
    if key == "u_family":
        if variant is None or variant.lower() not in U_VARIANTS:
            raise UnknownScenario(f"u_family needs a variant in {sorted(U_VARIANTS)}")
        return _u_spec(variant.lower(), rng)
    if key in U_VARIANTS:
        return _u_spec(key, rng)
    if key in _fixtures()["scenarios"]:
        return _s_spec(key, rng)
    raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def generate(name: str, seed: int, variant: str | None = None) -> tuple[Dataset, MixtureSpec]:
    spec = scenario(name, RngSpec(seed), variant)
    return sample_mixture(spec), spec
