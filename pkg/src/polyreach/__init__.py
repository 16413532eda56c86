"""Certified polytopic reachable-set over-approximation for ReLU-controlled affine systems."""

from .bnb import BnBNode, BnBProblem, BnBResult, SolveCapError, branch, lower_bound, maximize
from .bounds import NeuronBounds, SymbolicBound, propagate, symbolic_input_bounds, upper_bound_objective
from .linalg import SvdResult, cosine_similarity, numerical_rank, pinv, svd
from .network import (
    AffineLayer,
    Box,
    ControlledSystem,
    SequentialReluNetwork,
    absorb_zonotope,
    build_equivalent_step,
    evaluate,
    unit_box,
    unroll,
)
from .oracle import LpProblem, LpResult, exact_maximize, lp_maximize, simulate
from .reach import Polytope, ReachAborted, ReachResult, box_polytope, contains, max_violation, reach
from .templates import (
    RankError,
    affine_directions,
    box_template,
    network_directions,
    prune_similar,
    relu_directions,
    step_directions,
)

__version__ = "0.1.0"
