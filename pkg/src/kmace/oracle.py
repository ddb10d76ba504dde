"""Monte-Carlo check of the central-error and compactness moments for one cluster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ace import ClusterMoments, y_moments, z_moments
from .core import ConfigInvalid, RngSpec

DEFAULT_DRAWS = 100_000
CHUNK = 20_000
N_SE = 3.0


@dataclass(frozen=True)
class MomentConfig:
    """One cluster of ``n`` members with fixed true centres and diagonal scatter.

    ``spectra`` is (n, d): row ``i`` is the scatter variance of member ``i`` along
    each axis. All members share the axes, so the closed forms are exact when
    each row is sorted descending and, if the centres differ, every row is the
    same isotropic spectrum.
    """

    centers: np.ndarray
    spectra: np.ndarray
    draws: int = DEFAULT_DRAWS
    seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        s = np.asarray(self.spectra, dtype=np.float64)
        if c.ndim != 2 or s.shape != c.shape:
            raise ConfigInvalid("centers and spectra must both be (n, d)")
        if c.shape[0] < 1 or c.shape[1] < 1:
            raise ConfigInvalid("need at least one member and one dimension")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))) or np.any(s < 0):
            raise ConfigInvalid("spectra must be finite and non-negative")
        if self.draws < 2:
            raise ConfigInvalid("need at least two draws")

    @property
    def n(self) -> int:
        return int(np.shape(self.centers)[0])

    @property
    def d(self) -> int:
        return int(np.shape(self.centers)[1])

    @classmethod
    def from_dict(cls, raw: dict) -> "MomentConfig":
        try:
            n, d = int(raw["n"]), int(raw["d"])
            centers = np.asarray(raw.get("centers", np.zeros((n, d))), dtype=np.float64)
            spec = np.asarray(raw["spectra"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad moment config: {exc}") from exc
        if spec.ndim == 1:
            spec = np.tile(spec, (n, 1))
        if centers.shape != (n, d) or spec.shape != (n, d):
            raise ConfigInvalid(f"centers and spectra must be ({n}, {d})")
        return cls(centers, spec, int(raw.get("draws", DEFAULT_DRAWS)), int(raw.get("seed", 0)))

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "centers": np.asarray(self.centers).tolist(),
                "spectra": np.asarray(self.spectra).tolist(), "draws": self.draws, "seed": self.seed}

    def moments(self) -> ClusterMoments:
        spectra = [np.sort(row)[::-1] for row in np.asarray(self.spectra, dtype=np.float64)]
        return ClusterMoments.from_spectra(spectra, np.ones(self.n, dtype=np.int64), self.d)

    def delta_sq(self) -> float:
        c = np.asarray(self.centers, dtype=np.float64)
        u = c - c.mean(axis=0)
        return float(np.einsum("ij,ij->", u, u))


@dataclass(frozen=True)
class MomentCheck:
    name: str
    closed_form: float
    estimate: float
    std_error: float

    @property
    def passed(self) -> bool:
        tol = N_SE * self.std_error
        # a degenerate (zero-scatter) draw has no spread; demand exact agreement up to round-off
        return abs(self.estimate - self.closed_form) <= tol + 1e-12 * max(1.0, abs(self.closed_form))

    def to_dict(self) -> dict:
        return {"name": self.name, "closed_form": self.closed_form, "estimate": self.estimate,
                "std_error": self.std_error, "passed": self.passed}


def simulate(cfg: MomentConfig):
    """Draw z and y for ``cfg.draws`` independent scatter realisations."""
    c = np.asarray(cfg.centers, dtype=np.float64)
    std = np.sqrt(np.asarray(cfg.spectra, dtype=np.float64))
    gen = RngSpec(cfg.seed).child("mc-oracle").generator()
    z, y = [], []
    left = cfg.draws
    while left > 0:
        r = min(CHUNK, left)
        x = c[None] + gen.standard_normal((r, cfg.n, cfg.d)) * std[None]
        est = x.mean(axis=1, keepdims=True)
        z.append(np.sum((c[None] - est) ** 2, axis=(1, 2)))
        y.append(np.sum((x - est) ** 2, axis=(1, 2)))
        left -= r
    return np.concatenate(z), np.concatenate(y)


def _mean_and_var_checks(label: str, sample: np.ndarray, mean: float, var: float):
    r = sample.size
    centred = sample - sample.mean()
    s2 = float(np.mean(centred**2) * r / (r - 1))
    m4 = float(np.mean(centred**4))
    se_var = np.sqrt(max(m4 - s2**2 * (r - 3) / (r - 1), 0.0) / r)
    return [MomentCheck(f"E[{label}]", mean, float(sample.mean()), float(np.sqrt(s2 / r))),
            MomentCheck(f"Var[{label}]", var, s2, float(se_var))]


def check_moments(cfg: MomentConfig, perturb: float = 0.0) -> list[MomentCheck]:
    """Compare simulated moments with the closed forms; ``perturb`` scales the closed forms by ``1 + perturb``."""
    cm = cfg.moments()
    dsq = cfg.delta_sq()
    zm, zv = z_moments(cm, dsq)
    ym, yv = y_moments(cm, dsq)
    f = 1.0 + perturb
    z, y = simulate(cfg)
    return _mean_and_var_checks("Z", z, f * zm, f * zv) + _mean_and_var_checks("Y", y, f * ym, f * yv)


def random_config(rng: RngSpec, draws: int = DEFAULT_DRAWS) -> MomentConfig:
    """Random cluster from one of the two exact families.

    Even family draws: spread true centres with one shared isotropic spectrum.
    Odd family draws: coincident true centres with per-member diagonal spectra.
    """
    gen = rng.generator()
    n = int(gen.integers(2, 21))
    d = int(gen.integers(1, 6))
    base = gen.normal(0.0, 5.0, size=d)
    if gen.integers(2) == 0:
        centers = base + gen.normal(0.0, gen.uniform(0.1, 3.0), size=(n, d))
        spectra = np.full((n, d), gen.uniform(0.05, 4.0))
    else:
        centers = np.tile(base, (n, 1))
        spectra = -np.sort(-gen.uniform(0.05, 4.0, size=(n, d)), axis=1)
    return MomentConfig(centers, spectra, draws, int(gen.integers(2**31)))
