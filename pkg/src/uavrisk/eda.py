"""Estimation-of-distribution hybrids: EDA-RA* and the fast EDA-FRA*.

Each species is a binary mask over the grid (1 = open). Origin and
destination are always open and occupied cells always closed. The
probability field is re-estimated every iteration from the dominant
(lowest-fitness) species with a learning-rate blend.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyDominantSet, EmptyOpenSet, NoPath, ValidationError
from .grid import CellIndex
from .planning import (
    DEFAULT_DEVIATION_TOLERANCE,
    FlightPath,
    HeuristicInfo,
    risk_a_star,
    search,
)
from .risk import RiskMap


@dataclass(frozen=True)
class EdaParams:
    population_size: int = 50
    iterations: int = 100
    learning_rate: float = 0.1
    dominant_fraction: float = 0.3
    rng_seed: int = 0
    k_clusters: int = 5
    connectivity_penalty: float | None = None  # None: max finite cost x cell count
    initial_probability: float = 0.5
    inner_search: str = "dijkstra"  # or "riskastar"
    deviation_tolerance: float = DEFAULT_DEVIATION_TOLERANCE
    kmeans_max_iter: int = 100

    def __post_init__(self):
        if self.population_size < 1 or self.iterations < 1:
            raise ValidationError("population_size and iterations must be >= 1")
        if not 0 <= self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in [0, 1]")
        if not 0 < self.dominant_fraction <= 1:
            raise ValidationError("dominant_fraction must lie in (0, 1]")
        if not 0 <= self.initial_probability <= 1:
            raise ValidationError("initial_probability must lie in [0, 1]")
        if self.k_clusters < 1:
            raise ValidationError("k_clusters must be >= 1")
        if self.inner_search not in ("dijkstra", "riskastar"):
            raise ValidationError(f"unknown inner search {self.inner_search!r}")
        if self.connectivity_penalty is not None and not self.connectivity_penalty > 0:
            raise ValidationError("connectivity_penalty must be > 0")

    @property
    def dominant_count(self) -> int:
        return max(1, math.ceil(self.dominant_fraction * self.population_size))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class ProbabilityField:
    values: np.ndarray
    origin: CellIndex
    destination: CellIndex
    occupied: np.ndarray

    def __post_init__(self):
        self.values = np.clip(np.asarray(self.values, dtype=float), 0.0, 1.0)
        self.values[self.origin] = 1.0
        self.values[self.destination] = 1.0

    @classmethod
    def uniform(cls, risk_map: RiskMap, origin, destination, p: float = 0.5) -> "ProbabilityField":
        spec = risk_map.spec
        return cls(np.full(spec.shape, float(p)), spec.check(origin), spec.check(destination), risk_map.occupied)


@dataclass(eq=False)
class Species:
    mask: np.ndarray
    fitness: float = math.nan


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    best_fitness: float
    mean_fitness: float
    open_fraction: float


def species_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    """Independent stream per (iteration, species) so evaluation order cannot matter."""
    return np.random.default_rng([seed, iteration, index])


def sample_species(prob: ProbabilityField, rng: np.random.Generator) -> Species:
    mask = rng.random(prob.values.shape) < prob.values
    mask &= ~prob.occupied
    mask[prob.origin] = True
    mask[prob.destination] = True
    return Species(mask)


def update_probability(prob: ProbabilityField, dominant: list[Species], l_rate: float) -> ProbabilityField:
    """p <- (1 - l_rate) * p + l_rate * (sum of dominant masks) / (number of dominant)."""
    if not dominant:
        raise EmptyDominantSet("dominant set is empty")
    if not 0 <= l_rate <= 1:
        raise ValidationError("learning rate must lie in [0, 1]")
    freq = np.mean([s.mask for s in dominant], axis=0)
    return ProbabilityField(
        (1.0 - l_rate) * prob.values + l_rate * freq, prob.origin, prob.destination, prob.occupied
    )


def _free_open_fraction(masks: list[np.ndarray], free: np.ndarray) -> float:
    n_free = int(free.sum())
    if n_free == 0:
        return 0.0
    return float(np.mean([m[free].sum() / n_free for m in masks]))


def _select_dominant(species: list[Species], count: int) -> list[Species]:
    order = np.argsort([s.fitness for s in species], kind="stable")
    return [species[i] for i in order[:count]]


# --------------------------------------------------------------------------
# EDA-RA*
# --------------------------------------------------------------------------


def _inner_search(risk_map: RiskMap, origin, destination, mask: np.ndarray, params: EdaParams) -> FlightPath:
    if params.inner_search == "riskastar":
        open_costs = risk_map.total[mask & ~risk_map.occupied]
        hinfo = HeuristicInfo(float(open_costs.mean()), deviation_tolerance=params.deviation_tolerance)
        return search(risk_map, origin, destination, blocked=~mask, hinfo=hinfo, algorithm="eda-ra")
    return search(risk_map, origin, destination, blocked=~mask, algorithm="eda-ra")


def eda_ra_star(risk_map: RiskMap, origin, destination, params: EdaParams = EdaParams()) -> FlightPath:
    """Hybrid EDA with a path search restricted to each species' open cells.

    Fitness of a species is the risk cost of its restricted path; species
    without a feasible path get the population's worst feasible fitness.
    Returns the best path ever found, with the per-iteration trace attached
    as ``path.trace``.
    """
    spec = risk_map.spec
    o, d = spec.check(origin), spec.check(destination)
    t0 = time.perf_counter()
    prob = ProbabilityField.uniform(risk_map, o, d, params.initial_probability)
    free = ~risk_map.occupied
    best: FlightPath | None = None
    expanded = 0
    trace: list[TraceRow] = []
    if risk_map.occupied[o] or risk_map.occupied[d]:
        raise ValidationError("origin and destination must be unoccupied")

    for it in range(params.iterations):
        population = [sample_species(prob, species_rng(params.rng_seed, it, j)) for j in range(params.population_size)]
        feasible = []
        for s in population:
            try:
                p = _inner_search(risk_map, o, d, s.mask, params)
            except NoPath:
                continue
            expanded += p.expanded_nodes
            s.fitness = p.total_risk_cost
            feasible.append(s.fitness)
            if best is None or p.total_risk_cost < best.total_risk_cost:
                best = p
        worst = max(feasible) if feasible else math.inf
        for s in population:
            if math.isnan(s.fitness):
                s.fitness = worst
        prob = update_probability(prob, _select_dominant(population, params.dominant_count), params.learning_rate)
        trace.append(
            TraceRow(
                it + 1,
                best.total_risk_cost if best else math.inf,
                float(np.mean([s.fitness for s in population])),
                _free_open_fraction([s.mask for s in population], free),
            )
        )

    if best is None:
        best = search(risk_map, o, d, algorithm="eda-ra")  # raises NoPath if the map is disconnected
        expanded += best.expanded_nodes
    return FlightPath(
        vertices=best.vertices,
        total_risk_cost=best.total_risk_cost,
        distance_m=best.distance_m,
        algorithm="eda-ra",
        expanded_nodes=expanded,
        wall_time_s=time.perf_counter() - t0,
        extra={"eda_params": params.to_dict()},
        trace=trace,
    )


# --------------------------------------------------------------------------
# k-means heuristic extraction
# --------------------------------------------------------------------------


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """Lloyd's k-means with k-means++ seeding.

    Returns ``(centroids, labels, sse_history)``; the history holds the
    within-cluster sum of squares after every assignment step.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyOpenSet("no points to cluster")
    k = min(k, len(np.unique(X, axis=0)))

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(len(X))]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(len(X), p=d2 / total)) if total > 0 else int(rng.integers(len(X)))
        centroids[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[i]) ** 2, axis=1))

    labels = None
    history = []
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(len(X)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = X[labels == j]
            if len(members):  # an empty cluster keeps its centroid
                centroids[j] = members.mean(axis=0)
    return centroids, labels, history


def kmeans_heuristic(
    open_points,
    risk_map: RiskMap,
    k: int,
    origin,
    destination,
    rng: np.random.Generator | None = None,
    max_iter: int = 100,
    deviation_tolerance: float = DEFAULT_DEVIATION_TOLERANCE,
) -> HeuristicInfo:
    """Cluster open cells into a centroid track and a heuristic distance factor.

    The factor is the smaller of the mean cost over all open points and the
    mean cost over the open points nearest to each centroid.
    """
    spec = risk_map.spec
    pts = np.asarray([tuple(p) for p in open_points], dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyOpenSet("open point set is empty")
    if k < 1:
        raise ValidationError("k must be >= 1")
    rng = rng or np.random.default_rng(0)
    centroids, _, _ = kmeans(pts, k, rng, max_iter)

    idx = pts.astype(int)
    costs = risk_map.total[idx[:, 0], idx[:, 1], idx[:, 2]]
    if np.any(~np.isfinite(costs)):
        raise ValidationError("open points must be unoccupied")
    nearest = np.argmin(np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2), axis=0)
    factor = min(float(costs.mean()), float(costs[nearest].mean()))

    o = np.asarray(spec.check(origin), float)
    d = np.asarray(spec.check(destination), float)
    axis = d - o
    proj = centroids @ axis if np.any(axis) else np.zeros(len(centroids))
    ordered = centroids[np.argsort(proj, kind="stable")]
    world = [spec.cell_center(o)] + [spec.cell_center(c) for c in ordered] + [spec.cell_center(d)]
    return HeuristicInfo(factor, world, deviation_tolerance, centroids=[spec.cell_center(c) for c in ordered])


# --------------------------------------------------------------------------
# EDA-FRA*
# --------------------------------------------------------------------------


def region_fitness(risk_map: RiskMap, mask: np.ndarray, origin, destination, penalty: float) -> float:
    """Mean total cost over open cells, plus ``penalty`` if origin and destination are disconnected."""
    spec = risk_map.spec
    open_free = mask & ~risk_map.occupied
    value = float(risk_map.total[open_free].mean())
    ok = _kernels.connected(
        np.ascontiguousarray(open_free.ravel()), spec.nx, spec.ny, spec.nz, spec.flat(origin), spec.flat(destination)
    )
    return value if ok else value + penalty


def optimize_region(risk_map: RiskMap, origin, destination, params: EdaParams):
    """EDA loop over open-cell masks without path search; returns (best species, trace)."""
    spec = risk_map.spec
    o, d = spec.check(origin), spec.check(destination)
    penalty = params.connectivity_penalty
    if penalty is None:
        penalty = max(risk_map.max_finite_cost(), 1.0) * spec.n_cells
    prob = ProbabilityField.uniform(risk_map, o, d, params.initial_probability)
    free = ~risk_map.occupied
    best: Species | None = None
    trace = []
    for it in range(params.iterations):
        population = [sample_species(prob, species_rng(params.rng_seed, it, j)) for j in range(params.population_size)]
        for s in population:
            s.fitness = region_fitness(risk_map, s.mask, o, d, penalty)
            if best is None or s.fitness < best.fitness:
                best = s
        prob = update_probability(prob, _select_dominant(population, params.dominant_count), params.learning_rate)
        trace.append(
            TraceRow(
                it + 1,
                best.fitness,
                float(np.mean([s.fitness for s in population])),
                _free_open_fraction([s.mask for s in population], free),
            )
        )
    return best, trace


def eda_fra_star(risk_map: RiskMap, origin, destination, params: EdaParams = EdaParams()) -> FlightPath:
    """EDA over feasible regions, k-means heuristic extraction, then one risk A* on the full map."""
    spec = risk_map.spec
    o, d = spec.check(origin), spec.check(destination)
    if risk_map.occupied[o] or risk_map.occupied[d]:
        raise ValidationError("origin and destination must be unoccupied")
    t0 = time.perf_counter()
    best, trace = optimize_region(risk_map, o, d, params)
    open_points = np.argwhere(best.mask & ~risk_map.occupied)
    hinfo = kmeans_heuristic(
        open_points,
        risk_map,
        params.k_clusters,
        o,
        d,
        rng=np.random.default_rng([params.rng_seed, params.iterations, params.population_size]),
        max_iter=params.kmeans_max_iter,
        deviation_tolerance=params.deviation_tolerance,
    )
    path = risk_a_star(risk_map, o, d, hinfo)
    path.algorithm = "eda-fra"
    path.wall_time_s = time.perf_counter() - t0
    path.extra = {"eda_params": params.to_dict(), "heuristic": hinfo.to_dict()}
    path.trace = trace
    return path
