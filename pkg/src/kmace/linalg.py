"""Dense symmetric linear algebra used by the estimators."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import NotPositiveSemidefinite, NotSymmetric

JACOBI_MAX_DIM = 64
_DEBUG = os.environ.get("KMACE_DEBUG", "") not in ("", "0")


@dataclass(frozen=True)
class SymSpectrum:
    eigenvalues: np.ndarray  # descending, clamped at zero
    dim: int

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def trace_sq(self) -> float:
        return float(np.dot(self.eigenvalues, self.eigenvalues))

    @classmethod
    def zeros(cls, dim: int) -> "SymSpectrum":
        ev = np.zeros(dim)
        ev.flags.writeable = False
        return cls(ev, dim)


def covariance(samples) -> np.ndarray:
    """Unbiased sample covariance (divisor n-1); a single sample gives the zero matrix."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = x.shape
    if n < 2:
        return np.zeros((d, d))
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    return 0.5 * (cov + cov.T)


def _round_robin(p: int):
    """Disjoint (i, j) pair rounds covering every pair once (p even)."""
    players = list(range(p))
    rounds = []
    for _ in range(p - 1):
        pairs = [(players[i], players[p - 1 - i]) for i in range(p // 2)]
        rounds.append((np.array([min(a, b) for a, b in pairs]), np.array([max(a, b) for a, b in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100, vectors: bool = False):
    """Cyclic Jacobi eigen-decomposition of a real symmetric matrix.

    Rotations are applied in round-robin order so that each round annihilates
    ``p/2`` disjoint off-diagonal pairs at once. Iteration stops when the
    off-diagonal Frobenius norm drops below ``tol * ||A||_F``.

    Returns eigenvalues in descending order, and the matching eigenvectors as
    columns when ``vectors`` is true.
    """
    a = np.array(a, dtype=np.float64)
    p0 = a.shape[0]
    if p0 == 0:
        return (np.zeros(0), np.zeros((0, 0))) if vectors else np.zeros(0)
    p = p0 + (p0 % 2)
    if p != p0:
        a = np.pad(a, ((0, 1), (0, 1)))
    v = np.eye(p)
    norm = np.linalg.norm(a)
    rounds = _round_robin(p) if p > 1 else []
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * norm or norm == 0.0:
            break
        for ip, iq in rounds:
            apq = a[ip, iq]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            app, aqq = a[ip, ip], a[iq, iq]
            safe = np.where(active, apq, 1.0)
            # a tiny off-diagonal gives a huge theta; t then tends to 0, which is the right limit
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            colp, colq = a[:, ip].copy(), a[:, iq].copy()
            a[:, ip] = c * colp - s * colq
            a[:, iq] = s * colp + c * colq
            rowp, rowq = a[ip, :].copy(), a[iq, :].copy()
            a[ip, :] = c[:, None] * rowp - s[:, None] * rowq
            a[iq, :] = s[:, None] * rowp + c[:, None] * rowq
            if vectors:
                vp, vq = v[:, ip].copy(), v[:, iq].copy()
                v[:, ip] = c * vp - s * vq
                v[:, iq] = s * vp + c * vq
    ev = np.diag(a)[:p0]
    order = np.argsort(-ev, kind="stable")
    if vectors:
        return ev[order], v[:p0, :p0][:, order]
    return ev[order]


def sym_eigenvalues(a, method: str = "auto", debug: bool | None = None) -> SymSpectrum:
    """Eigenvalues of a symmetric PSD-up-to-round-off matrix, descending and clamped at 0.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_DIM``, LAPACK beyond). Values in ``[-1e-9 * lambda_max, 0)`` are
    clamped to zero; anything more negative raises in debug mode and is clamped otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    if np.abs(a - a.T).max(initial=0.0) > 1e-9 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-9 relative")
    a = 0.5 * (a + a.T)
    p = a.shape[0]
    if method == "auto":
        method = "jacobi" if p <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        ev = jacobi_eigh(a)
    elif method == "lapack":
        ev = np.linalg.eigvalsh(a)[::-1].copy()
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    lam_max = np.abs(ev).max(initial=0.0)
    tol = 1e-9 * lam_max
    if debug is None:
        debug = _DEBUG
    if debug and (ev < -tol).any():
        raise NotPositiveSemidefinite(f"eigenvalue {ev.min():.3e} below -1e-9*lambda_max")
    ev = np.where(ev < 0.0, 0.0, ev)
    ev.flags.writeable = False
    return SymSpectrum(ev, p)


def centering_matrices(n: int):
    """Return ``(A, B)``: the n x n centring matrix ``I - B`` and averaging matrix ``B = 1/n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    b = np.full((n, n), 1.0 / n)
    return np.eye(n) - b, b


def pairwise_sq_dists(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean(axis=0)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return d2
