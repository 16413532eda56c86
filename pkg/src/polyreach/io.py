"""JSON configuration, weight and result files, plus 2-D polygon export.

All files are plain JSON so fixtures stay human-inspectable. Doubles
round-trip bit-for-bit through json (shortest-repr float encoding).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .bnb import BnBResult
from .network import AffineLayer, Box, ControlledSystem, SequentialReluNetwork
from .oracle import INFEASIBLE, OPTIMAL, LpProblem, lp_maximize
from .reach import Polytope, ReachResult


class ConfigError(ValueError):
    """Malformed configuration, weight, or result file; message names the field."""


_REQUIRED_FIELDS = ("A", "B", "e", "x0_lower", "x0_upper", "weights", "horizon", "epsilon", "lambda")
_OPTIONAL_FIELDS = {"generator": None, "rank_tol": 1e-9, "node_cap": 1_000_000, "seed": 0}


@dataclass(frozen=True)
class RunConfig:
    A: np.ndarray
    B: np.ndarray
    e: np.ndarray
    x0_lower: np.ndarray
    x0_upper: np.ndarray
    weights: str
    horizon: int
    epsilon: float
    lam: float
    generator: np.ndarray | None = None
    rank_tol: float = 1e-9
    node_cap: int = 1_000_000
    seed: int = 0
    out: str | None = None


def _fail(field: str, message: str):
    raise ConfigError(f"{field}: {message}")


def _parse_matrix(obj, field: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        _fail(field, "must be a non-empty list of rows")
    width = None
    for i, row in enumerate(obj):
        if not isinstance(row, list) or not row:
            _fail(f"{field}[{i}]", "must be a non-empty list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            _fail(f"{field}[{i}]", f"row length {len(row)} differs from {width}")
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                _fail(f"{field}[{i}][{j}]", "must be a finite number")
    return np.array(obj, dtype=float)


def _parse_vector(obj, field: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        _fail(field, "must be a non-empty list of numbers")
    for i, v in enumerate(obj):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            _fail(f"{field}[{i}]", "must be a finite number")
    return np.array(obj, dtype=float)


def _parse_number(obj, field: str) -> float:
    if not isinstance(obj, (int, float)) or isinstance(obj, bool) or not math.isfinite(obj):
        _fail(field, "must be a finite number")
    return float(obj)


def _parse_int(obj, field: str) -> int:
    if not isinstance(obj, int) or isinstance(obj, bool):
        _fail(field, "must be an integer")
    return int(obj)


def _read_json(path: str, what: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration.

    The weights path is resolved relative to the config file's directory.
    """
    data = _read_json(path, "config")
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    known = set(_REQUIRED_FIELDS) | set(_OPTIONAL_FIELDS)
    for key in data:
        if key not in known:
            _fail(key, "unknown field")
    for key in _REQUIRED_FIELDS:
        if key not in data:
            _fail(key, "missing required field")

    A = _parse_matrix(data["A"], "A")
    B = _parse_matrix(data["B"], "B")
    e = _parse_vector(data["e"], "e")
    x0_lower = _parse_vector(data["x0_lower"], "x0_lower")
    x0_upper = _parse_vector(data["x0_upper"], "x0_upper")
    generator = None
    if data.get("generator") is not None:
        generator = _parse_matrix(data["generator"], "generator")
    weights = data["weights"]
    if not isinstance(weights, str) or not weights:
        _fail("weights", "must be a non-empty path string")
    horizon = _parse_int(data["horizon"], "horizon")
    epsilon = _parse_number(data["epsilon"], "epsilon")
    lam = _parse_number(data["lambda"], "lambda")
    rank_tol = _parse_number(data.get("rank_tol", _OPTIONAL_FIELDS["rank_tol"]), "rank_tol")
    node_cap = _parse_int(data.get("node_cap", _OPTIONAL_FIELDS["node_cap"]), "node_cap")
    seed = _parse_int(data.get("seed", _OPTIONAL_FIELDS["seed"]), "seed")

    n = A.shape[0]
    if A.shape[1] != n:
        _fail("A", f"must be square, got {A.shape[0]}x{A.shape[1]}")
    if B.shape[0] != n:
        _fail("B", f"has {B.shape[0]} rows, expected {n}")
    if e.shape[0] != n:
        _fail("e", f"has length {e.shape[0]}, expected {n}")
    if x0_lower.shape[0] != x0_upper.shape[0]:
        _fail("x0_upper", f"length {x0_upper.shape[0]} differs from x0_lower length {x0_lower.shape[0]}")
    if np.any(x0_lower > x0_upper):
        _fail("x0_lower", "must be componentwise <= x0_upper")
    if generator is not None:
        if generator.shape[0] != n:
            _fail("generator", f"has {generator.shape[0]} rows, expected {n}")
        if x0_lower.shape[0] != generator.shape[1]:
            _fail("x0_lower", f"length {x0_lower.shape[0]} must match generator columns {generator.shape[1]}")
        if np.any(x0_lower != -1.0) or np.any(x0_upper != 1.0):
            _fail("x0_lower", "zonotope initial sets require the unit cube [-1, 1]^p")
    elif x0_lower.shape[0] != n:
        _fail("x0_lower", f"has length {x0_lower.shape[0]}, expected {n}")
    if horizon < 0:
        _fail("horizon", "must be >= 0")
    if not epsilon > 0:
        _fail("epsilon", "must be > 0")
    if not 0 < lam <= 1:
        _fail("lambda", "must be in (0, 1]")
    if not rank_tol > 0:
        _fail("rank_tol", "must be > 0")
    if node_cap < 1:
        _fail("node_cap", "must be >= 1")

    weights_path = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), weights))
    return RunConfig(
        A=A, B=B, e=e, x0_lower=x0_lower, x0_upper=x0_upper, weights=weights_path,
        horizon=horizon, epsilon=epsilon, lam=lam, generator=generator,
        rank_tol=rank_tol, node_cap=node_cap, seed=seed,
    )


def config_to_dict(config: RunConfig) -> dict:
    out = {
        "A": config.A.tolist(),
        "B": config.B.tolist(),
        "e": config.e.tolist(),
        "x0_lower": config.x0_lower.tolist(),
        "x0_upper": config.x0_upper.tolist(),
        "weights": config.weights,
        "horizon": config.horizon,
        "epsilon": config.epsilon,
        "lambda": config.lam,
        "rank_tol": config.rank_tol,
        "node_cap": config.node_cap,
        "seed": config.seed,
    }
    if config.generator is not None:
        out["generator"] = config.generator.tolist()
    return out


def config_from_dict(data: dict) -> RunConfig:
    """Rebuild a RunConfig from a result file's config echo (weights already resolved)."""
    generator = np.array(data["generator"], dtype=float) if data.get("generator") is not None else None
    return RunConfig(
        A=np.array(data["A"], dtype=float),
        B=np.array(data["B"], dtype=float),
        e=np.array(data["e"], dtype=float),
        x0_lower=np.array(data["x0_lower"], dtype=float),
        x0_upper=np.array(data["x0_upper"], dtype=float),
        weights=data["weights"],
        horizon=int(data["horizon"]),
        epsilon=float(data["epsilon"]),
        lam=float(data["lambda"]),
        generator=generator,
        rank_tol=float(data.get("rank_tol", 1e-9)),
        node_cap=int(data.get("node_cap", 1_000_000)),
        seed=int(data.get("seed", 0)),
    )


def load_weights(path: str) -> SequentialReluNetwork:
    """Parse {"layers": [{"W": [[...]], "b": [...]}, ...]} into a network.

    Layers alternate affine/ReLU with no ReLU after the last affine layer.
    """
    data = _read_json(path, "weights")
    if not isinstance(data, dict) or "layers" not in data:
        raise ConfigError("layers: missing required field")
    raw_layers = data["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        _fail("layers", "must be a non-empty list")
    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "W" not in entry or "b" not in entry:
            _fail(f"layers[{i}]", 'must be an object with "W" and "b"')
        W = _parse_matrix(entry["W"], f"layers[{i}].W")
        b = _parse_vector(entry["b"], f"layers[{i}].b")
        if W.shape[0] != b.shape[0]:
            _fail(f"layers[{i}].b", f"length {b.shape[0]} does not match {W.shape[0]} rows of W")
        if layers and W.shape[1] != layers[-1].out_dim:
            _fail(
                f"layers[{i}].W",
                f"expects {W.shape[1]} inputs but layer {i - 1} produces {layers[-1].out_dim}",
            )
        layers.append(AffineLayer(W, b))
    return SequentialReluNetwork(tuple(layers))


def build_system(config: RunConfig) -> ControlledSystem:
    """Assemble the controlled system described by a config (loads the weights file)."""
    controller = load_weights(config.weights)
    n = config.A.shape[0]
    if controller.input_dim != n:
        raise ConfigError(f"weights: controller takes {controller.input_dim} inputs, system state has {n}")
    if controller.output_dim != config.B.shape[1]:
        raise ConfigError(
            f"weights: controller outputs {controller.output_dim} values, B expects {config.B.shape[1]}"
        )
    return ControlledSystem(
        A=config.A,
        B=config.B,
        e=config.e,
        controller=controller,
        initial_box=Box(config.x0_lower, config.x0_upper),
        generator=config.generator,
    )


def save_result(result: ReachResult, path: str, config: RunConfig | dict | None = None) -> None:
    """Write a reach result as JSON; round-trips all doubles bit-for-bit."""
    if isinstance(config, RunConfig):
        config = config_to_dict(config)
    steps = []
    for k, poly in enumerate(result.polytopes):
        directions = [
            {
                "lower": r.lower,
                "upper": r.upper,
                "iterations": r.iterations,
                "max_live_nodes": r.max_live_nodes,
            }
            for r in result.per_direction_stats[k]
        ]
        steps.append({"k": k, "C": poly.C.tolist(), "d": poly.d.tolist(), "directions": directions})
    payload = {"steps": steps, "wall_time": result.wall_time, "config": config}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def load_result(path: str) -> tuple[ReachResult, dict | None]:
    data = _read_json(path, "result")
    if not isinstance(data, dict) or "steps" not in data:
        raise ConfigError("steps: missing required field")
    polytopes = []
    stats = []
    for block in data["steps"]:
        polytopes.append(Polytope(np.array(block["C"], dtype=float), np.array(block["d"], dtype=float)))
        stats.append(
            tuple(
                BnBResult(
                    lower=float(r["lower"]),
                    upper=float(r["upper"]),
                    iterations=int(r["iterations"]),
                    max_live_nodes=int(r["max_live_nodes"]),
                )
                for r in block["directions"]
            )
        )
    result = ReachResult(tuple(polytopes), tuple(stats), float(data.get("wall_time", 0.0)))
    return result, data.get("config")


def vertices_2d(C: np.ndarray, d: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Vertices of {y in R^2 : C y <= d}, counterclockwise.

    All pairwise boundary-line intersections are kept when they satisfy
    every half-plane within tol; degenerate (segment or point) sets return
    their extreme points. Raises on an empty or unbounded set.
    """
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    if C.ndim != 2 or C.shape[1] != 2:
        raise ValueError("vertices_2d expects half-planes in R^2")
    scale = max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)
    feas_tol = tol * scale
    candidates = []
    m = C.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            M = np.array([C[i], C[j]])
            det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if abs(det) <= 1e-12 * max(np.linalg.norm(C[i]) * np.linalg.norm(C[j]), 1e-300):
                continue
            pt = np.linalg.solve(M, np.array([d[i], d[j]]))
            if np.all(C @ pt <= d + feas_tol):
                candidates.append(pt)
    if not candidates:
        raise ValueError("polytope is empty or unbounded in the plane")
    pts = np.array(candidates)
    # Collapse near-duplicates before ordering.
    rounded = np.round(pts / max(feas_tol, 1e-12))
    _, keep = np.unique(rounded, axis=0, return_index=True)
    pts = pts[np.sort(keep)]
    if pts.shape[0] <= 2:
        return pts
    try:
        hull = ConvexHull(pts)
        return pts[hull.vertices]
    except QhullError:
        # Collinear points: return the two extremes along the spread direction.
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        proj = centered @ vt[0]
        return pts[[int(np.argmin(proj)), int(np.argmax(proj))]]


def project_2d(poly: Polytope, dims: tuple[int, int], n_angles: int) -> np.ndarray:
    """Outer polygon of the polytope's shadow on a coordinate plane.

    Support values along n_angles uniformly spaced directions in the
    (dims[0], dims[1]) plane are solved as LPs over the full polytope; the
    resulting half-planes are vertex-enumerated. The polygon contains the
    true projection and tightens as n_angles grows.
    """
    if n_angles < 3:
        raise ValueError("n_angles must be at least 3")
    i, j = dims
    if i == j or not (0 <= i < poly.dim) or not (0 <= j < poly.dim):
        raise ValueError(f"dims {dims} invalid for a {poly.dim}-dimensional polytope")
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    plane = np.column_stack([np.cos(angles), np.sin(angles)])
    supports = np.empty(n_angles)
    for a in range(n_angles):
        direction = np.zeros(poly.dim)
        direction[i] = plane[a, 0]
        direction[j] = plane[a, 1]
        res = lp_maximize(LpProblem(direction, poly.C, poly.d))
        if res.status == INFEASIBLE:
            raise ValueError("cannot project an empty polytope")
        if res.status != OPTIMAL:
            raise ValueError(f"polytope is unbounded along angle {angles[a]:.4f}")
        supports[a] = res.value
    return vertices_2d(plane, supports)


def export_polygon_csv(vertices: np.ndarray, path: str) -> None:
    """Write polygon vertices as x,y rows (one polygon per file)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("x,y\n")
        for x, y in np.asarray(vertices, dtype=float):
            handle.write(f"{x:.17g},{y:.17g}\n")


def export_trajectories_csv(steps: list[np.ndarray], path: str) -> None:
    """Write simulated points as k,sample,x0,...,x{n-1} rows."""
    n = steps[0].shape[1]
    header = "k,sample," + ",".join(f"x{i}" for i in range(n))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(header + "\n")
        for k, pts in enumerate(steps):
            for s, row in enumerate(pts):
                coords = ",".join(f"{v:.17g}" for v in row)
                handle.write(f"{k},{s},{coords}\n")
