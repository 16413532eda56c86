"""Exact small-instance reference solvers: LP, activation-pattern enumeration, simulation.

These exist to check the certified pipeline against ground truth on desk
scale. They deliberately avoid the bound-propagation code path: pattern
stability presolve uses plain interval arithmetic implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .linalg import as_matrix, as_vector
from .network import Box, ControlledSystem, SequentialReluNetwork, evaluate

MAX_RELU_NEURONS = 24

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """Maximize objective @ x subject to A @ x <= b (free variables)."""

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        objective = as_vector(self.objective, "objective")
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape[1] != objective.shape[0]:
            raise ValueError(f"A has {A.shape[1]} columns, objective has length {objective.shape[0]}")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows, rhs has length {b.shape[0]}")
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class LpResult:
    status: str  # one of OPTIMAL, INFEASIBLE, UNBOUNDED
    value: float | None = None
    x: np.ndarray | None = None


def lp_maximize(problem: LpProblem) -> LpResult:
    """Exact LP resolution; raises on numerical failure, never returns a wrong status."""
    res = linprog(
        -problem.objective,
        A_ub=problem.A,
        b_ub=problem.b,
        bounds=(None, None),
        method="highs",
    )
    if res.status == 0:
        return LpResult(OPTIMAL, value=float(-res.fun), x=np.asarray(res.x, dtype=float))
    if res.status == 2:
        return LpResult(INFEASIBLE)
    if res.status == 3:
        return LpResult(UNBOUNDED)
    raise RuntimeError(f"LP solver failed: {res.message}")


def interval_preactivation_bounds(net: SequentialReluNetwork, box: Box) -> list[tuple[np.ndarray, np.ndarray]]:
    """Naive interval bounds on every affine layer output (independent of any relaxation)."""
    lo, hi = box.lower, box.upper
    out = []
    for layer in net.layers:
        Wp, Wn = np.maximum(layer.W, 0.0), np.minimum(layer.W, 0.0)
        l = Wp @ lo + Wn @ hi + layer.b
        u = Wp @ hi + Wn @ lo + layer.b
        out.append((l, u))
        lo, hi = np.maximum(l, 0.0), np.maximum(u, 0.0)
    return out


def exact_maximize(net: SequentialReluNetwork, c, box: Box) -> float:
    """Exact max over the box of c^T net(x) by activation-pattern enumeration.

    Every one of the 2^(ReLU count) patterns is visited; for each, the
    network restricted to that pattern is affine and the maximum subject to
    the box plus the pattern's pre-activation sign constraints is an LP
    (strict activation inequalities relaxed to >= 0, which shares boundary
    points between patterns and cannot change the maximum). Patterns that
    contradict an interval-stable neuron are provably infeasible and skip
    the LP solve. Refuses networks with more than MAX_RELU_NEURONS ReLUs.
    """
    c = as_vector(c, "c")
    if c.shape[0] != net.output_dim:
        raise ValueError(f"objective has length {c.shape[0]}, network outputs {net.output_dim}")
    if box.dim != net.input_dim:
        raise ValueError(f"box dimension {box.dim} does not match network input {net.input_dim}")
    relu_widths = net.relu_widths
    total = sum(relu_widths)
    if total > MAX_RELU_NEURONS:
        raise ValueError(f"{total} ReLU neurons exceed the enumeration budget of {MAX_RELU_NEURONS}")

    # Bit j of a pattern index is neuron j in layer order, 1 = active.
    interval = interval_preactivation_bounds(net, box)
    stable_mask = 0
    stable_vals = 0
    bit = 0
    for i, width in enumerate(relu_widths):
        l, u = interval[i]
        for j in range(width):
            if l[j] >= 0.0:
                stable_mask |= 1 << (bit + j)
                stable_vals |= 1 << (bit + j)
            elif u[j] <= 0.0:
                stable_mask |= 1 << (bit + j)
        bit += width

    dim = net.input_dim
    box_rows = np.vstack([np.eye(dim), -np.eye(dim)])
    box_rhs = np.concatenate([box.upper, -box.lower])
    best = -np.inf
    for idx in range(1 << total):
        if (idx & stable_mask) != stable_vals:
            continue
        M = net.layers[0].W
        v = net.layers[0].b
        rows = [box_rows]
        rhs = [box_rhs]
        bit = 0
        for i, width in enumerate(relu_widths):
            active = np.array([(idx >> (bit + j)) & 1 for j in range(width)], dtype=float)
            # active neuron: pre >= 0  <=>  -M x <= v ; inactive: M x <= -v
            sign = 1.0 - 2.0 * active
            rows.append(sign[:, None] * M)
            rhs.append(-sign * v)
            nxt = net.layers[i + 1]
            M = nxt.W @ (active[:, None] * M)
            v = nxt.W @ (active * v) + nxt.b
            bit += width
        res = lp_maximize(LpProblem(c @ M, np.vstack(rows), np.concatenate(rhs)))
        if res.status == OPTIMAL:
            best = max(best, res.value + float(c @ v))
        elif res.status == UNBOUNDED:
            raise RuntimeError("pattern LP unbounded over a bounded box")
    if not np.isfinite(best):
        raise RuntimeError("no feasible activation pattern found over a non-empty box")
    return float(best)


def simulate(sys: ControlledSystem, n_samples: int, horizon: int, seed: int) -> list[np.ndarray]:
    """Exact closed-loop trajectories from uniform initial samples.

    Initial states are drawn uniformly from the initial box (for zonotope
    systems, z is drawn from the unit cube and mapped through the
    generator). Returns one (n_samples, state_dim) array per step
    k = 0..horizon; deterministic for a fixed seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if sys.A.shape[0] != sys.A.shape[1]:
        raise ValueError("simulate requires square dynamics; lift zonotopes via the generator field")
    rng = np.random.default_rng(seed)
    samples = rng.uniform(sys.initial_box.lower, sys.initial_box.upper, size=(n_samples, sys.initial_box.dim))
    if sys.generator is not None:
        samples = samples @ sys.generator.T
    steps = [samples]
    x = samples.T
    for _ in range(horizon):
        u = evaluate(sys.controller, x)
        x = sys.A @ x + sys.B @ u + sys.e[:, None]
        steps.append(x.T.copy())
    return steps
