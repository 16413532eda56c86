"""End-to-end reachable-set pipeline.

For each step k the template C^k is derived from C^{k-1} through the
closed-loop maps, while the offsets d^k are certified upper bounds of the
support values of the k-fold unrolled step network over the initial box.
Solving end-to-end from the initial set avoids compounding the per-step
over-approximation (no polytope is ever propagated through the dynamics).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bnb import BnBProblem, BnBResult, SolveCapError, maximize
from .linalg import DEFAULT_RANK_TOL, as_matrix, as_vector
from .network import (
    Box,
    ControlledSystem,
    SequentialReluNetwork,
    absorb_input_map,
    absorb_zonotope,
    build_equivalent_step,
    unroll,
)
from .templates import RankError, affine_directions, box_template, step_directions


@dataclass(frozen=True)
class Polytope:
    """H-representation {x : C x <= d}."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = as_matrix(self.C, "C")
        d = as_vector(self.d, "d")
        if C.shape[0] != d.shape[0]:
            raise ValueError(f"C has {C.shape[0]} rows, d has length {d.shape[0]}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def n_facets(self) -> int:
        return self.C.shape[0]


def contains(poly: Polytope, x, tol: float = 1e-9) -> bool:
    """True iff C x <= d + tol componentwise."""
    x = as_vector(x, "x")
    if x.shape[0] != poly.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, polytope lives in {poly.dim}")
    return bool(np.all(poly.C @ x <= poly.d + tol))


def max_violation(poly: Polytope, points) -> float:
    """Largest constraint violation max_i max_p (C p - d)_i over a batch of row points.

    Non-positive means every point is inside.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != poly.dim:
        raise ValueError(f"expected points of shape (k, {poly.dim})")
    return float(np.max(poly.C @ pts.T - poly.d[:, None]))


def box_polytope(box: Box) -> Polytope:
    """The box as [I; -I] x <= [upper; -lower]."""
    return Polytope(box_template(box.dim), np.concatenate([box.upper, -box.lower]))


@dataclass(frozen=True)
class ReachResult:
    """Polytope per step (index 0 is the initial set) plus per-direction solver stats."""

    polytopes: tuple[Polytope, ...]
    per_direction_stats: tuple[tuple[BnBResult, ...], ...]
    wall_time: float


class ReachAborted(RuntimeError):
    """A direction solve hit its node cap; carries the completed steps."""

    def __init__(self, partial: ReachResult, step: int, direction: int, cause: SolveCapError):
        super().__init__(f"node cap exceeded at step {step}, direction {direction}")
        self.partial = partial
        self.step = step
        self.direction = direction
        self.cause = cause


def _initial_template(sys: ControlledSystem, rank_tol: float) -> np.ndarray:
    """State-space directions describing the initial set."""
    n = sys.state_dim
    if sys.generator is None:
        return box_template(n)
    try:
        return affine_directions(box_template(sys.generator.shape[1]), sys.generator, rank_tol)
    except RankError:
        # Degenerate generator: fall back to axis directions, always bounded.
        return box_template(n)


def reach(
    sys: ControlledSystem,
    horizon: int,
    epsilon: float,
    lam: float,
    rank_tol: float = DEFAULT_RANK_TOL,
    node_cap: int = 1_000_000,
    workers: int = 1,
) -> ReachResult:
    """Certified over-approximations of the reachable sets for k = 0..horizon.

    Every simulated trajectory of the system is contained in every returned
    polytope by construction: each offset is a certified upper bound on the
    corresponding support value of the exact k-step map over the initial
    set. Zonotope initial sets are absorbed once up front; the solves then
    run over the unit z-cube against the unrolled network composed with the
    generator. Deterministic for fixed inputs regardless of workers.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    start = time.perf_counter()

    generator = sys.generator
    if generator is not None:
        domain = absorb_zonotope(sys).initial_box
    else:
        domain = sys.initial_box
    polytopes = [box_polytope(domain)]
    stats: list[tuple[BnBResult, ...]] = [()]
    template = _initial_template(sys, rank_tol)

    step_net = build_equivalent_step(sys)

    def solve(net: SequentialReluNetwork, direction: np.ndarray) -> BnBResult:
        return maximize(BnBProblem(net, direction, domain, epsilon, node_cap))

    for k in range(1, horizon + 1):
        template = step_directions(template, sys, lam, rank_tol)
        net_k = unroll(step_net, k)
        if generator is not None:
            net_k = absorb_input_map(net_k, generator)
        rows = [template[i] for i in range(template.shape[0])]
        results = []
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(solve, net_k, row) for row in rows]
                for i, fut in enumerate(futures):
                    try:
                        results.append(fut.result())
                    except SolveCapError as err:
                        raise _abort(polytopes, stats, start, k, i, err) from err
        else:
            for i, row in enumerate(rows):
                try:
                    results.append(solve(net_k, row))
                except SolveCapError as err:
                    raise _abort(polytopes, stats, start, k, i, err) from err
        d = np.array([r.upper for r in results])
        polytopes.append(Polytope(template, d))
        stats.append(tuple(results))
    return ReachResult(tuple(polytopes), tuple(stats), time.perf_counter() - start)


def _abort(polytopes, stats, start, step, direction, err) -> ReachAborted:
    partial = ReachResult(tuple(polytopes), tuple(stats), time.perf_counter() - start)
    return ReachAborted(partial, step, direction, err)
