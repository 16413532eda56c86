"""Dense linear algebra: SVD with deterministic signs, pseudoinverse, rank, direction similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-9


def as_matrix(W, name: str = "matrix") -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {W.shape}")
    if W.size and not np.all(np.isfinite(W)):
        raise ValueError(f"{name} has non-finite entries")
    return W


def as_vector(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size and not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True)
class SvdResult:
    """Full decomposition W = U @ diag(s) @ V.T with orthogonal U (n1 x n1) and V (n0 x n0)."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def _flip_sign(column: np.ndarray) -> float:
    """Sign that makes the first non-negligible entry of the column positive."""
    for entry in column:
        if abs(entry) > 1e-12:
            return -1.0 if entry < 0 else 1.0
    return 1.0


def svd(W) -> SvdResult:
    """Full SVD with a reproducible sign convention.

    Each right singular vector is flipped so that its first non-negligible
    entry is non-negative; the paired left vector flips along to preserve the
    reconstruction. Basis columns beyond min(n1, n0) (null-space / left
    null-space directions) are canonicalized the same way on their own.

    Raises np.linalg.LinAlgError when the underlying iteration fails to
    converge; never returns a silently wrong factorization.
    """
    W = as_matrix(W, "W")
    n1, n0 = W.shape
    if n1 < 1 or n0 < 1:
        raise ValueError(f"W must have at least one row and column, got {W.shape}")
    U, s, Vt = np.linalg.svd(W, full_matrices=True)
    V = Vt.T
    k = min(n1, n0)
    for j in range(k):
        sign = _flip_sign(V[:, j])
        V[:, j] *= sign
        U[:, j] *= sign
    for j in range(k, n0):
        V[:, j] *= _flip_sign(V[:, j])
    for j in range(k, n1):
        U[:, j] *= _flip_sign(U[:, j])
    return SvdResult(U=U, singular_values=s, V=V)


def numerical_rank(singular_values, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above rank_tol relative to the largest one."""
    s = as_vector(singular_values, "singular_values")
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def pinv(W, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values below rank_tol * s_max zeroed.

    The all-zero matrix pseudoinverts to the zero matrix of transposed shape.
    """
    W = as_matrix(W, "W")
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((W.shape[1], W.shape[0]))
    inv = np.where(s > rank_tol * s[0], 1.0, 0.0)
    keep = inv > 0
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def cosine_similarity(c1, c2) -> float:
    """Signed cosine of the angle between two nonzero vectors, clipped to [-1, 1]."""
    c1 = as_vector(c1, "c1")
    c2 = as_vector(c2, "c2")
    n1 = np.linalg.norm(c1)
    n2 = np.linalg.norm(c2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(c1, c2) / (n1 * n2), -1.0, 1.0))
