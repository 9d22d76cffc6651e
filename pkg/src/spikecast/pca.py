"""PCA projection for news embeddings via covariance eigendecomposition.

The eigensolver is a cyclic Jacobi iteration on the (symmetric) covariance
matrix: repeated plane rotations zero out off-diagonal entries until the
matrix is numerically diagonal. Slow for huge matrices, rock solid for the
d <= a-few-hundred regime this pipeline lives in.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, RankError

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class PcaBasis:
    """Fitted projection: mean vector plus top-d' principal directions."""

    mean: np.ndarray                 # (d,)
    components: np.ndarray           # (d, d'), orthonormal columns
    explained_variance: np.ndarray   # (d',), population variance along each column
    fitted_on: int                   # number of training rows

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def d_prime(self) -> int:
        return self.components.shape[1]


def jacobi_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues descending and
    eigenvectors as columns. Deterministic for a given input.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ContractError(f"matrix must be square, got {a.shape}")
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    scale = np.abs(a).max() or 1.0
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= _JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= _JACOBI_TOL * scale * 1e-4:
                    continue
                # Rotation angle that annihilates a[p, q].
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q

    eigvals = a.diagonal().copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], v[:, order]


def fit_pca(rows: np.ndarray, d_prime: int) -> PcaBasis:
    """Fit the top-d' principal directions of mean-centered training rows.

    Sign convention: the largest-magnitude entry of each component is made
    positive, so the basis is unique and reproducible.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ContractError(f"expected 2-D row matrix, got shape {rows.shape}")
    n, d = rows.shape
    if n < 2:
        raise RankError(f"need >= 2 rows to fit PCA, got {n}")
    if not np.isfinite(rows).all():
        raise ContractError("embedding rows must be finite")
    if d_prime < 1 or d_prime > min(d, n - 1):
        raise RankError(
            f"d_prime={d_prime} out of range for {n} rows of dim {d} "
            f"(max {min(d, n - 1)})"
        )

    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / n  # population covariance
    total_var = float(np.trace(cov))
    if total_var <= 0.0:
        raise RankError("zero covariance: all rows identical")

    eigvals, eigvecs = jacobi_eigh(cov)
    components = eigvecs[:, :d_prime].copy()
    variance = np.maximum(eigvals[:d_prime], 0.0)
    for j in range(d_prime):
        col = components[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            components[:, j] = -col
    return PcaBasis(mean=mean, components=components,
                    explained_variance=variance, fitted_on=n)


def transform(basis: PcaBasis, vector: np.ndarray) -> np.ndarray:
    """Project one embedding onto the basis: W^T (e - mean)."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (basis.d,):
        raise ContractError(
            f"vector dim {vector.shape} does not match basis dim ({basis.d},)"
        )
    return basis.components.T @ (vector - basis.mean)


def transform_rows(basis: PcaBasis, rows: np.ndarray) -> np.ndarray:
    """Project a row matrix of embeddings onto the basis."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != basis.d:
        raise ContractError(
            f"rows shape {rows.shape} does not match basis dim {basis.d}"
        )
    return (rows - basis.mean) @ basis.components
