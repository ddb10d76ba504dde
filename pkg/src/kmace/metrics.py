"""Partition agreement scores, CNC accuracy and classical validity indices."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, DegenerateClusterNumber, EmptyRuns, LengthMismatch

TABLE_COLUMNS = ("method", "m_hat_mean", "m_hat_std", "accuracy", "ari", "nvi")


def contingency(truth, predicted) -> np.ndarray:
    """Counts of samples per (truth label, predicted label) pair."""
    t = np.asarray(truth).ravel()
    p = np.asarray(predicted).ravel()
    if t.shape != p.shape:
        raise LengthMismatch(f"label arrays differ in length: {t.size} vs {p.size}")
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((ti.max(initial=-1) + 1, pi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def _pairs(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(truth, predicted) -> float:
    """Adjusted Rand index between two labelings.

    Two partitions that both put everything together (or both isolate every
    sample) agree perfectly and score 1.
    """
    table = contingency(truth, predicted)
    n = table.sum()
    if n == 0:
        raise LengthMismatch("labelings are empty")
    index = _pairs(table).sum()
    a = _pairs(table.sum(axis=1)).sum()
    b = _pairs(table.sum(axis=0)).sum()
    total = _pairs(n)
    expected = a * b / total if total > 0 else 0.0
    best = 0.5 * (a + b)
    if best == expected:
        return 1.0 if index == expected else 0.0
    return float((index - expected) / (best - expected))


def _entropy(counts: np.ndarray, n: float) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nvi(truth, predicted) -> float:
    """Variation of information divided by the joint entropy; 0 means identical partitions."""
    table = contingency(truth, predicted)
    n = float(table.sum())
    if n == 0:
        raise LengthMismatch("labelings are empty")
    h_joint = _entropy(table.ravel(), n)
    if h_joint == 0.0:
        return 0.0
    h_t = _entropy(table.sum(axis=1), n)
    h_p = _entropy(table.sum(axis=0), n)
    vi = 2.0 * h_joint - h_t - h_p
    return float(min(max(vi / h_joint, 0.0), 1.0))


def cnc_accuracy(runs, true_m: int):
    """Mean and sample std of the estimated cluster numbers, and the percentage equal to ``true_m``."""
    r = np.asarray(runs, dtype=np.float64).ravel()
    if r.size == 0:
        raise EmptyRuns("no runs to summarise")
    std = float(r.std(ddof=1)) if r.size > 1 else 0.0
    return float(r.mean()), std, float(100.0 * np.mean(r == true_m))


@dataclass(frozen=True)
class BaselineIndices:
    m: np.ndarray
    ch: np.ndarray
    db: np.ndarray
    sil: np.ndarray

    @property
    def best_ch(self) -> int:
        return int(self.m[np.argmax(self.ch)])

    @property
    def best_db(self) -> int:
        return int(self.m[np.argmin(self.db)])

    @property
    def best_sil(self) -> int:
        return int(self.m[np.argmax(self.sil)])

    def to_dict(self) -> dict:
        return {"m": self.m.tolist(), "ch": self.ch.tolist(), "db": self.db.tolist(),
                "sil": self.sil.tolist(), "best": {"ch": self.best_ch, "db": self.best_db,
                                                   "sil": self.best_sil}}


def baseline_indices(data: Dataset | np.ndarray, partitions: dict) -> BaselineIndices:
    """Calinski-Harabasz, Davies-Bouldin and mean silhouette per ``m`` in input space.

    ``partitions`` maps each ``m`` to a Partition or an assignment array.
    """
    from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score

    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    ms = sorted(partitions)
    ch, db, sil = [], [], []
    for m in ms:
        assign = getattr(partitions[m], "assign", partitions[m])
        assign = np.asarray(assign)
        if m < 2 or np.unique(assign).size < 2:
            raise DegenerateClusterNumber(f"indices need at least two clusters, got m={m}")
        if assign.size != x.shape[0]:
            raise LengthMismatch("assignment length differs from the sample count")
        ch.append(calinski_harabasz_score(x, assign))
        db.append(davies_bouldin_score(x, assign))
        sil.append(silhouette_score(x, assign) if np.unique(assign).size < x.shape[0] else 0.0)
    return BaselineIndices(np.array(ms), np.array(ch), np.array(db), np.array(sil))


@dataclass(frozen=True)
class MethodSummary:
    method: str
    m_hat_mean: float
    m_hat_std: float
    accuracy: float
    ari: float
    nvi: float


def summarise(method: str, m_hats, true_m: int, aris, nvis) -> MethodSummary:
    mean, std, acc = cnc_accuracy(m_hats, true_m)
    return MethodSummary(method, mean, std, acc, float(np.mean(aris)), float(np.mean(nvis)))


def write_table(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r) if not isinstance(r, dict) else r)
