"""Symbolic linear bound propagation over a box input set.

Every neuron gets one linear lower and one linear upper bound in terms of
the preceding layer; concretization back-substitutes those bounds all the
way to the input box, layer by layer. An unstable ReLU with pre-activation
range [l, u] uses the chord u*(x - l)/(u - l) as its upper bound and
lambda * x with lambda in {0, 1} as its lower bound (minimal-area choice,
with the tie u == -l broken toward 0). Stable neurons stay exact, so the
bound degenerates to plain interval arithmetic on affine networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_vector
from .network import AffineLayer, Box, SequentialReluNetwork


@dataclass(frozen=True)
class NeuronBounds:
    """Concrete pre-activation bounds l <= W x + b <= u over the input box."""

    l: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class SymbolicBound:
    """Linear input-space functions enclosing one layer's pre-activations.

    For every x in the reference box:
    lower_coeffs @ x + lower_offset <= value <= upper_coeffs @ x + upper_offset.
    """

    lower_coeffs: np.ndarray
    lower_offset: np.ndarray
    upper_coeffs: np.ndarray
    upper_offset: np.ndarray


def _relu_relaxation(l: np.ndarray, u: np.ndarray):
    """Per-neuron slopes/offset of the linear ReLU enclosure on [l, u]."""
    active = l >= 0.0
    unstable = ~active & (u > 0.0)
    lam_u = np.where(active, 1.0, 0.0)
    lam_l = np.where(active, 1.0, 0.0)
    mu_u = np.zeros_like(l)
    if np.any(unstable):
        lu, uu = l[unstable], u[unstable]
        slope = uu / (uu - lu)
        lam_u[unstable] = slope
        mu_u[unstable] = -lu * slope
        lam_l[unstable] = np.where(uu > -lu, 1.0, 0.0)
    return lam_l, lam_u, mu_u


def _pos_neg(A: np.ndarray):
    return np.maximum(A, 0.0), np.minimum(A, 0.0)


def _sweep(net: SequentialReluNetwork, box: Box):
    """Concrete and symbolic bounds for every affine layer output, in order."""
    if box.dim != net.input_dim:
        raise ValueError(f"box dimension {box.dim} does not match network input {net.input_dim}")
    concrete: list[NeuronBounds] = []
    symbolic: list[SymbolicBound] = []
    relax = []  # (lam_l, lam_u, mu_u) per already-bounded ReLU stage
    for i, layer in enumerate(net.layers):
        A_up = layer.W.copy()
        c_up = layer.b.copy()
        A_lo = layer.W.copy()
        c_lo = layer.b.copy()
        for j in range(i - 1, -1, -1):
            lam_l, lam_u, mu_u = relax[j]
            pos, neg = _pos_neg(A_up)
            c_up = c_up + pos @ mu_u
            A_up = pos * lam_u + neg * lam_l
            pos, neg = _pos_neg(A_lo)
            c_lo = c_lo + neg @ mu_u
            A_lo = pos * lam_l + neg * lam_u
            Wj, bj = net.layers[j].W, net.layers[j].b
            c_up = c_up + A_up @ bj
            A_up = A_up @ Wj
            c_lo = c_lo + A_lo @ bj
            A_lo = A_lo @ Wj
        pos, neg = _pos_neg(A_up)
        u = pos @ box.upper + neg @ box.lower + c_up
        pos, neg = _pos_neg(A_lo)
        l = pos @ box.lower + neg @ box.upper + c_lo
        concrete.append(NeuronBounds(l=l, u=u))
        symbolic.append(SymbolicBound(A_lo, c_lo, A_up, c_up))
        if i < len(net.layers) - 1:
            relax.append(_relu_relaxation(l, u))
    return concrete, symbolic


def propagate(net: SequentialReluNetwork, box: Box) -> list[NeuronBounds]:
    """Sound concrete pre-activation bounds for every affine layer output."""
    return _sweep(net, box)[0]


def symbolic_input_bounds(net: SequentialReluNetwork, box: Box) -> list[SymbolicBound]:
    """The fully back-substituted symbolic bounds underlying propagate()."""
    return _sweep(net, box)[1]


def upper_bound_objective(net: SequentialReluNetwork, c, box: Box) -> float:
    """Sound upper bound on max over the box of c^T net(x).

    The objective direction is folded into the final affine layer (exact
    affine composition) and the extended network is propagated.
    """
    c = as_vector(c, "c")
    if c.shape[0] != net.output_dim:
        raise ValueError(f"objective has length {c.shape[0]}, network outputs {net.output_dim}")
    last = net.layers[-1]
    merged = AffineLayer((c @ last.W)[None, :], np.array([c @ last.b]))
    extended = SequentialReluNetwork((*net.layers[:-1], merged))
    return float(propagate(extended, box)[-1].u[0])
