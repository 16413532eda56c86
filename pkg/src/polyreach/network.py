"""Controller networks and the closed-loop plant as a skip-free sequential ReLU network.

A SequentialReluNetwork is an ordered list of affine layers with a ReLU
between every consecutive pair and none after the last. The closed-loop map
x+ = A x + B f(x) + e is rewritten in this form by routing the state through
ReLU(x) - ReLU(-x) identity blocks, so that any bound propagator that only
understands plain feed-forward ReLU networks can consume it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import block_diag

from .linalg import as_matrix, as_vector


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineLayer:
    """One affine map y = W x + b."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = _freeze(as_matrix(self.W, "W"))
        b = _freeze(as_vector(self.b, "b"))
        if W.shape[0] != b.shape[0]:
            raise ValueError(f"bias length {b.shape[0]} does not match {W.shape[0]} output rows")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class SequentialReluNetwork:
    """Alternating affine/ReLU network: affine, ReLU, affine, ..., affine."""

    layers: tuple[AffineLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one affine layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ValueError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].out_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def relu_widths(self) -> tuple[int, ...]:
        """Widths of the ReLU stages (all affine outputs except the last)."""
        return tuple(layer.out_dim for layer in self.layers[:-1])


def evaluate(net: SequentialReluNetwork, x) -> np.ndarray:
    """Exact forward pass.

    x may be a single vector of shape (input_dim,) or a batch of column
    vectors of shape (input_dim, k); the result has the matching shape.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != net.input_dim:
        raise ValueError(f"input has dimension {x.shape[0]}, network expects {net.input_dim}")
    for layer in net.layers[:-1]:
        x = np.maximum(layer.W @ x + _col(layer.b, x), 0.0)
    last = net.layers[-1]
    return last.W @ x + _col(last.b, x)


def _col(b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return b if x.ndim == 1 else b[:, None]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _freeze(as_vector(self.lower, "lower"))
        upper = _freeze(as_vector(self.upper, "upper"))
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def unit_box(dim: int) -> Box:
    """The cube {z : ||z||_inf <= 1}."""
    return Box(-np.ones(dim), np.ones(dim))


@dataclass(frozen=True)
class ControlledSystem:
    """Closed-loop plant x+ = A x + B f(x) + e over a box (or zonotope) of initial states.

    With a generator G present, the initial set is {G z : ||z||_inf <= 1} and
    initial_box must be the unit cube in z-space. Systems produced by
    absorb_zonotope keep A rectangular (state dim x domain dim); ordinary
    systems have square A.
    """

    A: np.ndarray
    B: np.ndarray
    e: np.ndarray
    controller: SequentialReluNetwork
    initial_box: Box
    generator: np.ndarray | None = None

    def __post_init__(self):
        A = _freeze(as_matrix(self.A, "A"))
        B = _freeze(as_matrix(self.B, "B"))
        e = _freeze(as_vector(self.e, "e"))
        n = A.shape[0]
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        if e.shape[0] != n:
            raise ValueError(f"e has length {e.shape[0]}, expected {n}")
        if self.controller.output_dim != B.shape[1]:
            raise ValueError(
                f"controller outputs {self.controller.output_dim} values, B expects {B.shape[1]}"
            )
        if self.controller.input_dim != A.shape[1]:
            raise ValueError(
                f"controller takes {self.controller.input_dim} inputs, A acts on {A.shape[1]}"
            )
        if self.generator is not None:
            G = _freeze(as_matrix(self.generator, "generator"))
            if G.shape[0] != A.shape[1]:
                raise ValueError(f"generator has {G.shape[0]} rows, expected {A.shape[1]}")
            if self.initial_box.dim != G.shape[1]:
                raise ValueError(
                    f"initial box dimension {self.initial_box.dim} does not match "
                    f"generator columns {G.shape[1]}"
                )
            if np.any(self.initial_box.lower != -1.0) or np.any(self.initial_box.upper != 1.0):
                raise ValueError("zonotope initial sets require the unit cube as initial_box")
            object.__setattr__(self, "generator", G)
        else:
            if self.initial_box.dim != A.shape[1]:
                raise ValueError(
                    f"initial box dimension {self.initial_box.dim} does not match "
                    f"state dimension {A.shape[1]}"
                )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "e", e)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]


def build_equivalent_step(sys: ControlledSystem) -> SequentialReluNetwork:
    """Skip-free sequential network computing A x + B f(x) + e exactly.

    The state is carried through every ReLU stage as the pair
    (ReLU(x), ReLU(-x)) and recombined by the output map [A, -A], so ReLU
    stage i has width 2*n0 + n_i. The stacking map is merged into the first
    block-diagonal map and the output map into the last one, keeping the
    result strictly alternating.

    A controller with no hidden layer makes f affine; the identity routing
    then has no ReLU stage to pass through, so the closed-loop map is
    composed directly into a single affine layer.
    """
    A, B, e = sys.A, sys.B, sys.e
    ctrl = sys.controller.layers
    d = A.shape[1]
    if len(ctrl) == 1:
        W0, b0 = ctrl[0].W, ctrl[0].b
        return SequentialReluNetwork((AffineLayer(A + B @ W0, B @ b0 + e),))
    eye = np.eye(d)
    zeros2 = np.zeros(2 * d)
    first = AffineLayer(np.vstack([eye, -eye, ctrl[0].W]), np.concatenate([zeros2, ctrl[0].b]))
    middle = [
        AffineLayer(block_diag(eye, eye, layer.W), np.concatenate([zeros2, layer.b]))
        for layer in ctrl[1:-1]
    ]
    last_ctrl = ctrl[-1]
    final = AffineLayer(np.hstack([A, -A, B @ last_ctrl.W]), B @ last_ctrl.b + e)
    return SequentialReluNetwork((first, *middle, final))


def unroll(step_net: SequentialReluNetwork, k: int) -> SequentialReluNetwork:
    """k-fold composition of a square step network as one sequential network.

    The output affine layer of each copy is merged with the input affine
    layer of the next (exact matrix product and bias composition), so the
    result stays strictly alternating.
    """
    if k < 1:
        raise ValueError("unroll requires k >= 1; handle horizon 0 directly")
    if step_net.input_dim != step_net.output_dim:
        raise ValueError(
            f"cannot iterate a network mapping {step_net.input_dim} -> {step_net.output_dim}"
        )
    if k == 1:
        return step_net
    first = step_net.layers[0]
    layers = list(step_net.layers)
    for _ in range(k - 1):
        last = layers.pop()
        merged = AffineLayer(first.W @ last.W, first.W @ last.b + first.b)
        layers.append(merged)
        layers.extend(step_net.layers[1:])
    return SequentialReluNetwork(tuple(layers))


def absorb_zonotope(sys: ControlledSystem) -> ControlledSystem:
    """Substitute x = G z and fold G into the maps acting on the state.

    The returned system runs over z with the unit cube as its initial set:
    the controller's first layer weight becomes W0 @ G and the linear
    dynamics become A @ G, so its one-step map sends z to F(G z) exactly.
    The result has a rectangular A when G is not square; multi-step analysis
    composes the original square dynamics on top (see the reach pipeline).
    """
    if sys.generator is None:
        raise ValueError("system has no zonotope generator to absorb")
    G = sys.generator
    if G.shape[1] == 0:
        raise ValueError("generator must have at least one column")
    first = sys.controller.layers[0]
    lifted_ctrl = SequentialReluNetwork(
        (AffineLayer(first.W @ G, first.b), *sys.controller.layers[1:])
    )
    return ControlledSystem(
        A=sys.A @ G,
        B=sys.B,
        e=sys.e,
        controller=lifted_ctrl,
        initial_box=unit_box(G.shape[1]),
        generator=None,
    )


def absorb_input_map(net: SequentialReluNetwork, G) -> SequentialReluNetwork:
    """Right-multiply the first affine layer by G, composing the net with z -> G z."""
    G = as_matrix(G, "G")
    first = net.layers[0]
    return SequentialReluNetwork((AffineLayer(first.W @ G, first.b), *net.layers[1:]))


def replace_initial_box(sys: ControlledSystem, box: Box) -> ControlledSystem:
    return replace(sys, initial_box=box)
