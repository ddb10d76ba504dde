"""Shared domain types, errors and seeded randomness."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class KmaceError(ValueError):
    """Base class for every error raised by this package."""


class EmptyData(KmaceError):
    pass


class NonFiniteValue(KmaceError):
    pass


class LabelLengthMismatch(KmaceError):
    pass


class NotSymmetric(KmaceError):
    pass


class NotPositiveSemidefinite(KmaceError):
    pass


class TooManyClusters(KmaceError):
    pass


class NonPositiveAlpha(KmaceError):
    pass


class PartitionDatasetMismatch(KmaceError):
    pass


class RangeInvalid(KmaceError):
    pass


class NonPositiveSigma(KmaceError):
    pass


class DatasetTooLarge(KmaceError):
    pass


class LengthMismatch(KmaceError):
    pass


class EmptyRuns(KmaceError):
    pass


class DegenerateClusterNumber(KmaceError):
    pass


class CovarianceNotPSD(KmaceError):
    pass


class UnknownScenario(KmaceError):
    pass


class ConfigInvalid(KmaceError):
    pass


class CsvParseError(KmaceError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RngSpec:
    """Seed plus a stream label; equal specs give bit-identical draws."""

    seed: int
    stream: str = "main"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.stream.encode("utf-8")).digest()
        key = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "RngSpec":
        return RngSpec(self.seed, f"{self.stream}/{label}")

    def to_dict(self) -> dict:
        return {"seed": int(self.seed), "stream": self.stream}


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    name: str = "data"

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def true_m(self) -> int | None:
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1


def remap_labels(labels) -> np.ndarray:
    """Map arbitrary label values onto dense ids 0..m-1 in order of first sorted value."""
    _, dense = np.unique(np.asarray(labels), return_inverse=True)
    return dense.astype(np.int64).reshape(-1)


def validate_dataset(raw, labels=None, name: str = "data") -> Dataset:
    x = np.asarray(raw, dtype=np.float64)
    if x.size == 0:
        raise EmptyData("dataset has no samples")
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise EmptyData(f"expected a 2-D sample matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("dataset contains NaN or infinite values")
    lab = None
    if labels is not None:
        lab = np.asarray(labels).reshape(-1)
        if lab.shape[0] != x.shape[0]:
            raise LabelLengthMismatch(f"{lab.shape[0]} labels for {x.shape[0]} samples")
        lab = _frozen(remap_labels(lab), np.int64)
    return Dataset(_frozen(x), lab, name)


@dataclass(frozen=True)
class Partition:
    """An m-clustering: assignment, centres, sizes and compactness.

    ``compactness_per_cluster[j]`` is the summed squared distance of the members of
    cluster ``j`` to its centre and ``compactness_total`` is their sum divided by N.
    Kernel runs store feature-space compactness here while ``centers`` stay in input space.
    """

    m: int
    assign: np.ndarray
    centers: np.ndarray
    sizes: np.ndarray
    compactness_per_cluster: np.ndarray
    compactness_total: float
    iterations: int = 0
    objective_trace: tuple = field(default=(), compare=False)

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assign == j)

    def check(self, samples: np.ndarray | None = None, atol: float = 1e-9) -> None:
        """Raise AssertionError if any Partition invariant is broken."""
        assert self.assign.min(initial=0) >= 0 and self.assign.max(initial=0) < self.m
        assert int(self.sizes.sum()) == self.n
        assert np.array_equal(self.sizes, np.bincount(self.assign, minlength=self.m))
        total = self.compactness_per_cluster.sum() / self.n
        assert abs(total - self.compactness_total) <= 1e-9 * max(abs(total), 1e-300) + 1e-300
        if samples is not None:
            for j in range(self.m):
                if self.sizes[j] > 0:
                    mean = samples[self.assign == j].mean(axis=0)
                    assert np.allclose(self.centers[j], mean, rtol=0, atol=atol * max(1.0, np.abs(mean).max()))

    def to_dict(self) -> dict:
        return {
            "m": int(self.m),
            "assign": self.assign.tolist(),
            "centers": self.centers.tolist(),
            "sizes": self.sizes.tolist(),
            "compactness_per_cluster": self.compactness_per_cluster.tolist(),
            "compactness_total": float(self.compactness_total),
        }


def make_partition(samples: np.ndarray, assign, m: int, compactness=None,
                   iterations: int = 0, objective_trace=()) -> Partition:
    """Build a Partition from an assignment, computing means and (by default) input-space compactness."""
    assign = np.asarray(assign, dtype=np.int64)
    sizes = np.bincount(assign, minlength=m)
    sums = np.zeros((m, samples.shape[1]))
    np.add.at(sums, assign, samples)
    centers = sums / np.maximum(sizes, 1)[:, None]
    if compactness is None:
        resid = samples - centers[assign]
        compactness = np.bincount(assign, weights=np.einsum("ij,ij->i", resid, resid), minlength=m)
    compactness = np.asarray(compactness, dtype=np.float64)
    return Partition(
        m=int(m),
        assign=_frozen(assign, np.int64),
        centers=_frozen(centers),
        sizes=_frozen(sizes, np.int64),
        compactness_per_cluster=_frozen(compactness),
        compactness_total=float(compactness.sum() / samples.shape[0]),
        iterations=int(iterations),
        objective_trace=tuple(float(v) for v in objective_trace),
    )


def read_csv(path, name: str | None = None) -> Dataset:
    """Load a dataset CSV: header row required, optional final ``label`` column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        n_feat = len(header) - int(has_label)
        if n_feat < 1:
            raise CsvParseError("no feature columns in header", 1)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                rows.append([float(c) for c in row[:n_feat]])
            except ValueError as exc:
                raise CsvParseError(str(exc), lineno) from None
            if has_label:
                labels.append(row[-1].strip())
    if not rows:
        raise EmptyData(f"{path}: no data rows")
    lab = None
    if has_label:
        try:
            lab = np.array([int(v) for v in labels])
        except ValueError:
            lab = np.array(labels)
    return validate_dataset(np.array(rows), lab, name or path.stem)


def write_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    cols = [f"x{i}" for i in range(dataset.d)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + (["label"] if dataset.labels is not None else []))
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.samples[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)
