"""Branch-and-bound maximization of c^T net(x) over a box, certified to a gap.

Nodes are sub-rectangles of the initial box, selected best-first by their
propagated upper bound. Lower bounds come from exact network evaluations at
the box center and the axis-extreme midpoints, so the returned interval
always contains the true maximum; the solver stops once the interval width
drops to epsilon.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import upper_bound_objective
from .linalg import as_vector
from .network import Box, SequentialReluNetwork, evaluate

DEFAULT_NODE_CAP = 1_000_000


@dataclass(frozen=True)
class BnBProblem:
    net: SequentialReluNetwork
    c: np.ndarray
    box: Box
    epsilon: float
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        c = as_vector(self.c, "c")
        if c.shape[0] != self.net.output_dim:
            raise ValueError(
                f"objective has length {c.shape[0]}, network outputs {self.net.output_dim}"
            )
        if self.box.dim != self.net.input_dim:
            raise ValueError(
                f"box dimension {self.box.dim} does not match network input {self.net.input_dim}"
            )
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.node_cap < 1:
            raise ValueError("node_cap must be at least 1")
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class BnBNode:
    """One sub-rectangle with its current bound information."""

    box: Box
    upper: float
    lower: float


@dataclass(frozen=True)
class BnBResult:
    lower: float
    upper: float
    iterations: int
    max_live_nodes: int

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class BnBSnapshot:
    """Solver state handed to the monitor callback once per iteration."""

    iteration: int
    lower: float
    upper: float
    live_boxes: tuple[Box, ...]
    pruned_volume: float


class SolveCapError(RuntimeError):
    """Node budget exhausted; carries the best (still sound) bounds found."""

    def __init__(self, best: BnBResult):
        super().__init__(
            f"node cap exceeded with bounds [{best.lower:.9g}, {best.upper:.9g}] "
            f"(gap {best.gap:.3g})"
        )
        self.best = best


def lower_bound(net: SequentialReluNetwork, c, box: Box) -> float:
    """Max of c^T net(x) over the box center and the 2*dim axis-extreme midpoints.

    Exact evaluations, hence always a valid lower bound on the supremum.
    """
    c = as_vector(c, "c")
    center = box.center
    pts = np.tile(center, (2 * box.dim + 1, 1))
    for j in range(box.dim):
        pts[1 + 2 * j, j] = box.lower[j]
        pts[2 + 2 * j, j] = box.upper[j]
    values = c @ evaluate(net, pts.T)
    return float(np.max(values))


def branch(node: BnBNode, ref_widths: np.ndarray | None = None) -> tuple[BnBNode, BnBNode]:
    """Bisect the node's box at the midpoint of its widest side.

    With ref_widths given, side widths are normalized by them first (so the
    solver refines the least-refined dimension of the initial box); ties go
    to the lowest index. Children inherit the parent's upper bound as a
    valid stale bound and get their own bounds on evaluation.
    """
    widths = node.box.widths
    if ref_widths is None:
        metric = widths
    else:
        ref = np.asarray(ref_widths, dtype=float)
        metric = np.divide(widths, ref, out=np.zeros_like(widths), where=ref > 0)
    dim = int(np.argmax(metric))
    if widths[dim] <= 0.0:
        raise ValueError("cannot branch a zero-width box")
    mid = 0.5 * (node.box.lower[dim] + node.box.upper[dim])
    lo_upper = node.box.upper.copy()
    lo_upper[dim] = mid
    hi_lower = node.box.lower.copy()
    hi_lower[dim] = mid
    left = BnBNode(Box(node.box.lower, lo_upper), upper=node.upper, lower=-np.inf)
    right = BnBNode(Box(hi_lower, node.box.upper), upper=node.upper, lower=-np.inf)
    return left, right


def _volume(box: Box) -> float:
    return float(np.prod(box.widths))


def maximize(
    problem: BnBProblem,
    monitor: Callable[[BnBSnapshot], None] | None = None,
) -> BnBResult:
    """Certified interval [lower, upper] around max over the box of c^T net(x).

    Terminates with upper - lower <= epsilon, or raises SolveCapError once
    more than node_cap nodes have been bounded. A node is pruned exactly
    when its upper bound does not exceed the best exact value found, so the
    returned interval always contains the true maximum. Deterministic: heap
    ties are broken by insertion order.
    """
    net, c, root, eps = problem.net, problem.c, problem.box, problem.epsilon
    ref_widths = root.widths
    best_lb = lower_bound(net, c, root)
    root_ub = upper_bound_objective(net, c, root)
    nodes_bounded = 1
    iterations = 1
    max_live = 1
    pruned_volume = 0.0
    seq = 0
    heap: list[tuple[float, int, BnBNode]] = []
    if root_ub > best_lb:
        heapq.heappush(heap, (-root_ub, seq, BnBNode(root, upper=root_ub, lower=best_lb)))

    def snapshot() -> BnBSnapshot:
        return BnBSnapshot(
            iteration=iterations,
            lower=best_lb,
            upper=global_ub,
            live_boxes=tuple(entry[2].box for entry in heap),
            pruned_volume=pruned_volume,
        )

    global_ub = max(root_ub, best_lb)
    if monitor is not None:
        monitor(snapshot())
    while heap:
        global_ub = max(-heap[0][0], best_lb)
        if global_ub - best_lb <= eps:
            return BnBResult(best_lb, global_ub, iterations, max_live)
        _, _, node = heapq.heappop(heap)
        if node.upper <= best_lb:
            pruned_volume += _volume(node.box)
            continue
        for child in branch(node, ref_widths):
            child_ub = min(upper_bound_objective(net, c, child.box), node.upper)
            child_lb = lower_bound(net, c, child.box)
            nodes_bounded += 1
            best_lb = max(best_lb, child_lb)
            if child_ub > best_lb:
                seq += 1
                heapq.heappush(heap, (-child_ub, seq, BnBNode(child.box, child_ub, child_lb)))
            else:
                pruned_volume += _volume(child.box)
        iterations += 1
        max_live = max(max_live, len(heap))
        global_ub = max(-heap[0][0], best_lb) if heap else best_lb
        if monitor is not None:
            monitor(snapshot())
        if nodes_bounded > problem.node_cap:
            raise SolveCapError(BnBResult(best_lb, global_ub, iterations, max_live))
    return BnBResult(best_lb, best_lb, iterations, max_live)
