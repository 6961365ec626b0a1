"""Dense matrix helpers and truncated SVD.

Matrices are plain ``float64`` numpy arrays. The helpers here validate shapes
and finiteness and pin down a deterministic sign convention for singular
vectors so that downstream initializations are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError

SIGN_THRESHOLD = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2D float64 array or raise."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SvdResult:
    left_vectors: np.ndarray  # (rows, k), orthonormal columns
    singular_values: np.ndarray  # (k,), non-increasing, >= 0

    @property
    def k(self) -> int:
        return self.singular_values.shape[0]


def fix_signs(vectors: np.ndarray, threshold: float = SIGN_THRESHOLD) -> np.ndarray:
    """Flip columns so the first entry with magnitude above ``threshold`` is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > threshold)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def svd_topk(a, k: int) -> SvdResult:
    """Top-``k`` left singular vectors and singular values of ``a``.

    Backed by LAPACK (``gesdd`` through numpy). When ``a`` has fewer than ``k``
    non-negligible singular values, the trailing columns come from the
    orthonormal completion LAPACK returns for the null space.
    """
    a = as_matrix(a, "A")
    rows, cols = a.shape
    if not 1 <= k <= min(rows, cols):
        raise DimensionError(f"k={k} outside [1, {min(rows, cols)}] for shape {a.shape}")
    try:
        u, s, _ = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        # gesdd reports non-convergence; attach a residual estimate for diagnosis
        resid = float(np.linalg.norm(a)) if a.size else 0.0
        raise NumericError(f"SVD did not converge (||A||_F={resid:.3e}): {exc}") from exc
    left = fix_signs(u[:, :k])
    values = np.maximum(s[:k], 0.0)
    return SvdResult(np.ascontiguousarray(left), values)


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def alignment(u1, u2, k: int | None = None) -> float:
    """|trace(U1^T U2)| / k for two sets of k orthonormal columns."""
    u1 = as_matrix(u1, "U1")
    u2 = as_matrix(u2, "U2")
    if u1.shape != u2.shape:
        raise DimensionError(f"shape mismatch {u1.shape} vs {u2.shape}")
    if k is None:
        k = u1.shape[1]
    if not 1 <= k <= u1.shape[1]:
        raise DimensionError(f"k={k} outside [1, {u1.shape[1]}]")
    return abs(float(np.sum(u1[:, :k] * u2[:, :k]))) / k
