"""Adaptive template directions for output polytopes of affine/ReLU maps.

Rows of a template matrix are facet normals. Directions are pulled through
an affine layer y = W x + b via the pseudoinverse (C -> C W+); when W is
tall the left singular vectors outside its range are appended with both
signs so the output set is pinned onto the (shifted) range of W. ReLU
stages contribute the facets y >= 0. Near-duplicate directions are removed
by a signed cosine-similarity scan, first occurrence wins.
"""

from __future__ import annotations

import numpy as np

from .linalg import DEFAULT_RANK_TOL, as_matrix, numerical_rank, pinv, svd
from .network import AffineLayer, ControlledSystem, SequentialReluNetwork

# Rows of C @ W+ whose norm falls below this (relative to the source row)
# are treated as annihilated and dropped.
_ZERO_ROW_RTOL = 1e-12


class RankError(ValueError):
    """A tall layer without full column rank; augment with axis directions instead."""


def _as_template(C, n: int | None = None) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"template matrix must be 2-D, got shape {C.shape}")
    if n is not None and C.shape[1] != n:
        raise ValueError(f"template has {C.shape[1]} columns, expected {n}")
    return C


def box_template(n: int) -> np.ndarray:
    """Axis-aligned facet normals [I; -I]."""
    eye = np.eye(n)
    return np.vstack([eye, -eye])


def affine_directions(C, W, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Template for the image of Poly(C, .) under y = W x + b.

    Fat or square W: C @ W+ with annihilated (zero) rows dropped. Tall W
    with full column rank: additionally +-u_i for every left singular vector
    outside the range of W. Tall rank-deficient W raises RankError.
    """
    W = as_matrix(W, "W")
    n1, n0 = W.shape
    C = _as_template(C, n0)
    C_hat = C @ pinv(W, rank_tol)
    if C.shape[0]:
        src_norm = np.linalg.norm(C, axis=1)
        row_norm = np.linalg.norm(C_hat, axis=1)
        C_hat = C_hat[row_norm > _ZERO_ROW_RTOL * np.maximum(src_norm, 1.0)]
    if n1 > n0:
        dec = svd(W)
        if numerical_rank(dec.singular_values, rank_tol) < n0:
            raise RankError(
                f"tall {n1}x{n0} layer has column rank below {n0}; "
                "augment with axis directions"
            )
        extra = np.empty((2 * (n1 - n0), n1))
        extra[0::2] = dec.U[:, n0:].T
        extra[1::2] = -dec.U[:, n0:].T
        C_hat = np.vstack([C_hat, extra])
    return C_hat


def relu_directions(C, n: int) -> np.ndarray:
    """Append the facets y >= 0, i.e. rows -e_1, ..., -e_n."""
    C = _as_template(C, n)
    return np.vstack([C, -np.eye(n)])


def prune_similar(C, lam: float) -> np.ndarray:
    """Drop rows whose cosine similarity to an earlier kept row exceeds lam.

    Signed cosine: anti-parallel rows define different facets and are kept.
    Idempotent; first occurrence wins.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("similarity level must be in (0, 1]")
    C = _as_template(C)
    norms = np.linalg.norm(C, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("template matrix must not contain zero rows")
    units = C / norms[:, None]
    kept: list[int] = []
    for i in range(C.shape[0]):
        if kept:
            sims = np.clip(units[kept] @ units[i], -1.0, 1.0)
            if np.any(sims > lam):
                continue
        kept.append(i)
    return C[kept]


def network_directions(C, net: SequentialReluNetwork, lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Fold affine_directions/relu_directions over the network, then prune.

    ReLU facets are appended only after affine layers that a ReLU actually
    follows, so the final affine layer contributes no -e_i rows.
    """
    D = _as_template(C, net.input_dim)
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        D = affine_directions(D, layer.W, rank_tol)
        if i < last:
            D = relu_directions(D, layer.out_dim)
    return prune_similar(D, lam)


def prepruning_count(m: int, widths: tuple[int, ...]) -> int:
    """Closed-form row count of network_directions before pruning.

    widths = (n_0, ..., n_L). Source rows survive every layer, each interior
    ReLU adds its width, and each tall layer adds a +-u pair per missing
    range direction. Assumes no direction is annihilated to zero.
    """
    interior = sum(widths[1:-1])
    tall = sum(max(widths[i] - widths[i - 1], 0) for i in range(1, len(widths)))
    return m + interior + 2 * tall


def step_directions(C, sys: ControlledSystem, lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Template for one closed-loop step: directions for A x stacked on directions for B f(x).

    The B-side runs network_directions on the controller with B appended as
    a final affine layer. If that chain fails on a rank-deficient tall layer,
    produces nothing, or A itself is rank-deficient, axis directions +-e_i
    are appended so the result can always define a bounded polytope.
    """
    A = sys.A
    n = A.shape[0]
    C = _as_template(C, n)
    C1 = affine_directions(C, A, rank_tol)
    ctrl_with_B = SequentialReluNetwork(
        (*sys.controller.layers, AffineLayer(sys.B, np.zeros(n)))
    )
    chain_failed = False
    try:
        C2 = network_directions(C, ctrl_with_B, lam, rank_tol)
    except RankError:
        C2 = np.zeros((0, n))
        chain_failed = True
    need_axis = (
        chain_failed
        or C2.shape[0] == 0
        or numerical_rank(np.linalg.svd(A, compute_uv=False), rank_tol) < n
    )
    parts = [C1, C2]
    if need_axis:
        parts.append(box_template(n))
    return prune_similar(np.vstack(parts), lam)
