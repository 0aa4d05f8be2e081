"""Minimum risk-cost path planning on a risk map.

A path is a sequence of 26-adjacent cells. Its risk cost is the sum of the
total cost of every cell *entered*, so the origin is free and an occupied
cell makes the cost infinite. Metric distance is tracked separately.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import NoPath, ValidationError
from .grid import CellIndex, GridSpec, OccupancyGrid
from .risk import RiskMap

DEFAULT_DEVIATION_TOLERANCE = 0.2
_EMPTY_TRACK = np.zeros((0, 3))
_EMPTY_REST = np.zeros(0)


@dataclass
class FlightPath:
    vertices: list[CellIndex]
    total_risk_cost: float
    distance_m: float
    algorithm: str = ""
    expanded_nodes: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)
    trace: list | None = field(default=None, repr=False)

    @property
    def origin(self) -> CellIndex:
        return self.vertices[0]

    @property
    def destination(self) -> CellIndex:
        return self.vertices[-1]

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "algorithm": self.algorithm,
            "origin": list(self.origin.one_based()),
            "destination": list(self.destination.one_based()),
            "vertices": [list(v.one_based()) for v in self.vertices],
            "total_risk_cost": self.total_risk_cost,
            "distance_m": self.distance_m,
            "expanded_nodes": self.expanded_nodes,
            "wall_time_s": self.wall_time_s if timing else None,
        }
        d.update(self.extra)
        return d


@dataclass
class HeuristicInfo:
    """Heuristic inputs of the risk A* search.

    ``centroid_track`` holds world-space points (m) from the origin cell
    centroid through the cluster centroids to the destination cell centroid.
    """

    heuristic_factor: float
    centroid_track: list[np.ndarray] = field(default_factory=list)
    deviation_tolerance: float = DEFAULT_DEVIATION_TOLERANCE
    centroids: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (self.heuristic_factor >= 0 and math.isfinite(self.heuristic_factor)):
            raise ValidationError("heuristic factor must be finite and >= 0")
        if self.deviation_tolerance < 0:
            raise ValidationError("deviation tolerance must be >= 0")
        self.centroid_track = [np.asarray(p, dtype=float) for p in self.centroid_track]

    def validate_for(self, spec: GridSpec, origin, destination) -> None:
        if not self.centroid_track:
            return
        if len(self.centroid_track) < 2:
            raise ValidationError("a centroid track needs at least origin and destination")
        if not np.allclose(self.centroid_track[0], spec.cell_center(origin)) or not np.allclose(
            self.centroid_track[-1], spec.cell_center(destination)
        ):
            raise ValidationError("centroid track must start at the origin and end at the destination centroid")

    def to_dict(self) -> dict:
        return {
            "heuristic_factor": self.heuristic_factor,
            "deviation_tolerance": self.deviation_tolerance,
            "centroid_track_m": [p.tolist() for p in self.centroid_track],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeuristicInfo":
        return cls(
            float(d["heuristic_factor"]),
            [np.asarray(p, float) for p in d.get("centroid_track_m", [])],
            float(d.get("deviation_tolerance", DEFAULT_DEVIATION_TOLERANCE)),
        )


@dataclass(frozen=True)
class PathViolation:
    kind: str
    index: int
    message: str


def path_cost(vertices: Sequence[Sequence[int]], risk_map: RiskMap) -> float:
    """Sum of the total cost of every vertex after the origin."""
    spec = risk_map.spec
    cost = 0.0
    for i, v in enumerate(vertices):
        spec.check(v)
        if i == 0:
            continue
        if risk_map.occupied[tuple(v)]:
            return math.inf
        cost += float(risk_map.total[tuple(v)])
    return cost


def path_distance(vertices: Sequence[Sequence[int]], spec: GridSpec) -> float:
    return float(sum(spec.segment_length(a, b) for a, b in zip(vertices, vertices[1:])))


def validate_path(
    vertices: Sequence[Sequence[int]], spec: GridSpec, occupancy: OccupancyGrid | np.ndarray | None = None
) -> PathViolation | None:
    """First constraint violation along the path, or None if the path is valid."""
    occ = occupancy.occupied if isinstance(occupancy, OccupancyGrid) else occupancy
    if len(vertices) == 0:
        return PathViolation("EmptyPath", 0, "path has no vertices")
    seen = set()
    for i, v in enumerate(vertices):
        v = tuple(int(c) for c in v)
        if len(v) != 3 or not spec.contains(v):
            return PathViolation("OutOfBounds", i, f"vertex {v} outside grid {spec.shape}")
        if occ is not None and occ[v]:
            return PathViolation("OccupiedViolation", i, f"vertex {v} is occupied")
        if i > 0:
            prev = tuple(vertices[i - 1])
            delta = [a - b for a, b in zip(v, prev)]
            if all(d == 0 for d in delta):
                return PathViolation("HoverViolation", i, f"vertex {v} repeats the previous vertex")
            if any(abs(d) > 1 for d in delta):
                return PathViolation("AdjacencyViolation", i, f"step {prev} -> {v} is not a 26-neighbour move")
        if v in seen:
            return PathViolation("RepeatViolation", i, f"vertex {v} visited twice")
        seen.add(v)
    return None


def _endpoints(risk_map_or_spec, occupied, origin, destination):
    spec = risk_map_or_spec
    o = spec.check(origin)
    d = spec.check(destination)
    if occupied[o]:
        raise ValidationError(f"origin {o} is occupied")
    if occupied[d]:
        raise ValidationError(f"destination {d} is occupied")
    return o, d


def _reconstruct_flat(pred: np.ndarray, origin_flat: int, dest_flat: int) -> np.ndarray:
    out = [dest_flat]
    node = dest_flat
    while node != origin_flat:
        node = int(pred[node])
        out.append(node)
    return np.array(out[::-1], dtype=np.int64)


def _track_arrays(spec: GridSpec, hinfo: HeuristicInfo | None):
    """Track points after the origin, in index coordinates, plus remaining polyline lengths."""
    if hinfo is None or len(hinfo.centroid_track) < 2:
        return _EMPTY_TRACK, _EMPTY_REST
    pts = np.array([spec.world_to_index(p) for p in hinfo.centroid_track[1:]], dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    rest = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return np.ascontiguousarray(pts), rest


def search(
    risk_map: RiskMap,
    origin,
    destination,
    *,
    blocked: np.ndarray | None = None,
    metric: bool = False,
    hinfo: HeuristicInfo | None = None,
    hard_deviation: bool = False,
    algorithm: str = "",
) -> FlightPath:
    """Shared best-first search. ``blocked`` (shape of the grid) closes extra cells."""
    spec = risk_map.spec
    o, d = _endpoints(spec, risk_map.occupied, origin, destination)
    t0 = time.perf_counter()
    blk = risk_map.occupied if blocked is None else (risk_map.occupied | blocked)
    blk = np.ascontiguousarray(blk.ravel())
    cost = np.ascontiguousarray(risk_map.total.ravel())
    track, rest = _track_arrays(spec, hinfo)
    factor = 0.0 if hinfo is None else float(hinfo.heuristic_factor)
    eps = DEFAULT_DEVIATION_TOLERANCE if hinfo is None else float(hinfo.deviation_tolerance)
    of, df = spec.flat(o), spec.flat(d)
    if blk[of] or blk[df]:
        raise NoPath(f"origin or destination closed for {algorithm or 'search'}")
    pred, g, expanded, found = _kernels.best_first(
        cost,
        blk,
        spec.nx,
        spec.ny,
        spec.nz,
        of,
        df,
        _kernels.STEP_METRIC if metric else _kernels.STEP_RISK,
        spec.unit_x,
        spec.unit_y,
        spec.unit_z,
        factor,
        track,
        rest,
        eps,
        hard_deviation,
    )
    if not found:
        raise NoPath(f"no path from {o} to {d}")
    flat_path = _reconstruct_flat(pred, of, df)
    elapsed = time.perf_counter() - t0
    idx = np.array(np.unravel_index(flat_path, spec.shape)).T
    steps = np.diff(idx, axis=0) * np.array(spec.units)
    return FlightPath(
        vertices=[CellIndex(*map(int, r)) for r in idx],
        total_risk_cost=float(cost[flat_path[1:]].sum()),
        distance_m=float(np.linalg.norm(steps, axis=1).sum()),
        algorithm=algorithm,
        expanded_nodes=int(expanded),
        wall_time_s=elapsed,
    )


def dijkstra_risk(risk_map: RiskMap, origin, destination) -> FlightPath:
    """Globally minimal risk-cost path (edge weight = cost of the entered cell)."""
    return search(risk_map, origin, destination, algorithm="dijkstra")


def dijkstra_distance(risk_map: RiskMap, origin, destination) -> FlightPath:
    """Shortest metric path that ignores risk; its risk cost is evaluated on ``risk_map``."""
    return search(risk_map, origin, destination, metric=True, algorithm="distance")


def risk_a_star(
    risk_map: RiskMap,
    origin,
    destination,
    hinfo: HeuristicInfo,
    *,
    hard_deviation: bool = False,
) -> FlightPath:
    """Risk A*: f = g + h, h from the scaled Euclidean distance and the centroid track.

    The Euclidean distance is measured in cells. When the track-based estimate
    deviates from the direct one by a relative amount of at least
    ``deviation_tolerance`` the track estimate is used instead
    (``hard_deviation=True`` discards such nodes).
    """
    hinfo.validate_for(risk_map.spec, risk_map.spec.check(origin), risk_map.spec.check(destination))
    return search(risk_map, origin, destination, hinfo=hinfo, hard_deviation=hard_deviation, algorithm="riskastar")
