"""Benchmark harness, risk-type ablation, mitigation experiment and the
two-sample confidence interval on the mitigated fraction of risk.

Risk costs are raw path sums (vertex costs after the origin) and carry no
physical unit; only ratios between algorithms are meaningful.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .eda import EdaParams, eda_fra_star, eda_ra_star
from .errors import DegenerateGroup, NoPath, UavRiskError, ValidationError
from .grid import GridSpec
from .planning import FlightPath, dijkstra_distance, dijkstra_risk, path_cost
from .risk import RiskMap, RiskWeights, UavModel, build_risk_map
from .scenario import ScenarioGenConfig, UrbanScenario, generate_scenario

REFERENCE_ALGORITHM = "dijkstra"
DEFAULT_Z = 1.96

Planner = Callable[[RiskMap, tuple, tuple, EdaParams], FlightPath]

PLANNERS: dict[str, Planner] = {
    "dijkstra": lambda m, o, d, p: dijkstra_risk(m, o, d),
    "distance": lambda m, o, d, p: dijkstra_distance(m, o, d),
    "eda-ra": lambda m, o, d, p: eda_ra_star(m, o, d, p),
    "eda-fra": lambda m, o, d, p: eda_fra_star(m, o, d, p),
}


def params_digest(params: EdaParams | Mapping) -> str:
    """Short stable hash of a parameter set."""
    d = params.to_dict() if isinstance(params, EdaParams) else dict(params)
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class BenchmarkRecord:
    scenario_id: str
    algorithm: str
    origin: tuple[int, int, int]
    destination: tuple[int, int, int]
    total_risk_cost: float
    distance_m: float
    wall_time_s: float
    expanded_nodes: int
    seed: int
    params_digest: str
    ok: bool = True
    error: str = ""
    path: FlightPath | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.ok and (self.total_risk_cost < 0 or self.distance_m < 0 or self.wall_time_s < 0):
            raise ValidationError("cost, distance and time must be >= 0")

    def row(self, timing: bool = True) -> dict:
        d = asdict(self)
        d.pop("path")
        d["origin"] = " ".join(str(c + 1) for c in self.origin)
        d["destination"] = " ".join(str(c + 1) for c in self.destination)
        if not timing:
            d["wall_time_s"] = None
        return d


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    runs: int
    failures: int
    cost_ratio_mean: float
    cost_ratio_std: float
    distance_ratio_mean: float
    distance_ratio_std: float
    time_fraction: float
    median_time_s: float


def _std(x) -> float:
    x = np.asarray(x, float)
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def summarize(records: Sequence[BenchmarkRecord], reference: Sequence[BenchmarkRecord] | None = None) -> list[SummaryRow]:
    """Per-algorithm ratios against the reference planner on the same (scenario, OD).

    ``time_fraction`` is mean wall time over the reference's mean wall time.
    Only successful records with a successful reference take part.
    """
    ref_pool = list(reference) if reference is not None else [r for r in records if r.algorithm == REFERENCE_ALGORITHM]
    ref = {(r.scenario_id, r.origin, r.destination): r for r in ref_pool if r.ok}
    ref_time = float(np.mean([r.wall_time_s for r in ref.values()])) if ref else math.nan
    rows = []
    for algo in dict.fromkeys(r.algorithm for r in records):
        mine = [r for r in records if r.algorithm == algo]
        paired = [(r, ref[(r.scenario_id, r.origin, r.destination)]) for r in mine if r.ok and (r.scenario_id, r.origin, r.destination) in ref]
        cost = [r.total_risk_cost / b.total_risk_cost if b.total_risk_cost > 0 else 1.0 for r, b in paired]
        dist = [r.distance_m / b.distance_m if b.distance_m > 0 else 1.0 for r, b in paired]
        times = [r.wall_time_s for r in mine if r.ok]
        rows.append(
            SummaryRow(
                algorithm=algo,
                runs=len(mine),
                failures=sum(not r.ok for r in mine),
                cost_ratio_mean=float(np.mean(cost)) if cost else math.nan,
                cost_ratio_std=_std(cost),
                distance_ratio_mean=float(np.mean(dist)) if dist else math.nan,
                distance_ratio_std=_std(dist),
                time_fraction=float(np.mean(times)) / ref_time if times and ref_time > 0 else math.nan,
                median_time_s=float(np.median(times)) if times else math.nan,
            )
        )
    return rows


def _run_one(planner: Planner, risk_map, o, d, params, sid, algo) -> BenchmarkRecord:
    digest = params_digest(params)
    t0 = time.perf_counter()
    try:
        path = planner(risk_map, o, d, params)
    except (NoPath, UavRiskError) as exc:
        return BenchmarkRecord(sid, algo, o, d, math.nan, math.nan, time.perf_counter() - t0, 0, params.rng_seed, digest, False, f"{type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - t0
    return BenchmarkRecord(
        sid, algo, o, d, path.total_risk_cost, path.distance_m, elapsed, path.expanded_nodes, params.rng_seed, digest, path=path
    )


def run_benchmark(
    scenarios: Mapping[str, RiskMap] | Sequence[RiskMap],
    algorithms: Sequence[str],
    od_pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
    params: EdaParams = EdaParams(),
) -> tuple[list[BenchmarkRecord], list[SummaryRow]]:
    """Run every (scenario, algorithm, OD) combination.

    Planner failures are recorded on the record instead of aborting the run.
    If the reference Dijkstra is not among ``algorithms`` it is still run,
    but only to form the ratios.
    """
    if isinstance(scenarios, Mapping):
        items = list(scenarios.items())
    else:
        items = [(m.meta.get("scenario", str(i)) or str(i), m) for i, m in enumerate(scenarios)]
    if not items:
        raise ValidationError("at least one scenario is required")
    if not algorithms:
        raise ValidationError("at least one algorithm is required")
    unknown = [a for a in algorithms if a not in PLANNERS]
    if unknown:
        raise ValidationError(f"unknown algorithms {unknown}; choose from {sorted(PLANNERS)}")

    records, hidden_ref = [], []
    for sid, m in items:
        for o, d in od_pairs:
            o, d = tuple(m.spec.check(o)), tuple(m.spec.check(d))
            for algo in algorithms:
                records.append(_run_one(PLANNERS[algo], m, o, d, params, sid, algo))
            if REFERENCE_ALGORITHM not in algorithms:
                hidden_ref.append(_run_one(PLANNERS[REFERENCE_ALGORITHM], m, o, d, params, sid, REFERENCE_ALGORITHM))
    reference = hidden_ref if REFERENCE_ALGORITHM not in algorithms else None
    return records, summarize(records, reference)


# --------------------------------------------------------------------------
# Confidence interval
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CIResult:
    """Interval for (mean2 - mean1) / mean2, i.e. the fraction of group 2 removed."""

    n1: int
    n2: int
    mean1: float
    mean2: float
    var1: float
    var2: float
    z_value: float
    interval_low: float
    interval_high: float

    @property
    def point(self) -> float:
        return (self.mean2 - self.mean1) / self.mean2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["point"] = self.point
        return d


def ci_from_stats(n1: int, n2: int, mean1: float, mean2: float, var1: float, var2: float, z: float = DEFAULT_Z) -> CIResult:
    if n1 < 2 or n2 < 2:
        raise DegenerateGroup("each group needs at least two samples")
    if mean2 == 0:
        raise DegenerateGroup("reference group mean is zero")
    if var1 < 0 or var2 < 0 or z < 0:
        raise ValidationError("variances and z must be >= 0")
    delta = mean2 - mean1
    se = math.sqrt(var1 / n1 + var2 / n2)
    lo, hi = sorted(((delta - z * se) / mean2, (delta + z * se) / mean2))
    return CIResult(n1, n2, mean1, mean2, var1, var2, z, lo, hi)


def confidence_interval(group1: Sequence[float], group2: Sequence[float], z: float = DEFAULT_Z) -> CIResult:
    """Normal-approximation interval with unbiased (n - 1) sample variances."""
    a = np.asarray(group1, float)
    b = np.asarray(group2, float)
    if a.size < 2 or b.size < 2:
        raise DegenerateGroup("each group needs at least two samples")
    return ci_from_stats(a.size, b.size, float(a.mean()), float(b.mean()), float(a.var(ddof=1)), float(b.var(ddof=1)), z)


# --------------------------------------------------------------------------
# Mitigation experiment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationSample:
    seed: int
    mitigated: float
    unmitigated: float


@dataclass
class MitigationResult:
    samples: list[MitigationSample]
    excluded: list[int]
    ci: CIResult

    def to_dict(self) -> dict:
        return {
            "samples": [asdict(s) for s in self.samples],
            "excluded_seeds": list(self.excluded),
            "ci": self.ci.to_dict(),
        }


def mitigation_experiment(
    n_patterns: int,
    gen_cfg: ScenarioGenConfig = ScenarioGenConfig(),
    od: tuple[Sequence[int], Sequence[int]] = ((0, 0, 0), (59, 59, 3)),
    spec: GridSpec | None = None,
    weights: RiskWeights = RiskWeights(),
    uav: UavModel = UavModel(),
    z: float = DEFAULT_Z,
) -> MitigationResult:
    """Risk of the shortest path vs the minimum-risk path over random patterns.

    Pattern ``i`` uses generator seed ``gen_cfg.rng_seed + i``. Patterns
    whose OD pair is blocked or disconnected are excluded and listed.
    """
    if n_patterns < 2:
        raise ValidationError("at least two patterns are needed for an interval")
    samples, excluded = [], []
    for i in range(n_patterns):
        seed = gen_cfg.rng_seed + i
        scn = generate_scenario(replace(gen_cfg, rng_seed=seed), spec)
        m = build_risk_map(scn, uav=uav, weights=weights)
        try:
            safe = dijkstra_risk(m, *od)
            short = dijkstra_distance(m, *od)
        except (NoPath, ValidationError):
            excluded.append(seed)
            continue
        samples.append(MitigationSample(seed, safe.total_risk_cost, short.total_risk_cost))
    if len(samples) < 2:
        raise DegenerateGroup(f"only {len(samples)} feasible patterns")
    ci = confidence_interval([s.mitigated for s in samples], [s.unmitigated for s in samples], z)
    return MitigationResult(samples, excluded, ci)


# --------------------------------------------------------------------------
# Risk-type ablation
# --------------------------------------------------------------------------

ABLATION_WEIGHTS: dict[str, RiskWeights | None] = {
    "path1": None,  # uniform unit cost, obstacles kept
    "path2": RiskWeights(1.0, 0.0, 0.0),
    "path3": RiskWeights(2.0 / 3.0, 1.0 / 3.0, 0.0),
    "path4": RiskWeights(0.5, 0.25, 0.25),
}


@dataclass
class AblationRow:
    label: str
    weights: tuple[float, float, float] | None
    full_risk_cost: float
    planning_cost: float
    distance_m: float
    path: FlightPath = field(repr=False)

    def row(self) -> dict:
        return {
            "path": self.label,
            "weights": "uniform" if self.weights is None else " ".join(f"{w:.4f}" for w in self.weights),
            "full_risk_cost": self.full_risk_cost,
            "planning_cost": self.planning_cost,
            "distance_m": self.distance_m,
            "n_vertices": len(self.path.vertices),
        }


def risk_ablation(
    scenario: UrbanScenario,
    spec: GridSpec | None = None,
    uav: UavModel = UavModel(),
    od: tuple[Sequence[int], Sequence[int]] = ((0, 0, 0), (59, 59, 3)),
    params: EdaParams = EdaParams(),
    planner: str = "eda-fra",
) -> list[AblationRow]:
    """Plan on four maps that add one risk type at a time.

    Every path is scored on the full three-component map with the default
    weights, so the rows are directly comparable.
    """
    full = build_risk_map(scenario, spec, uav=uav)
    plan = PLANNERS[planner]
    rows = []
    for label, w in ABLATION_WEIGHTS.items():
        if w is None:
            m = RiskMap.from_costs(full.spec, np.ones(full.spec.shape), full.occupied)
        else:
            m = full.with_weights(w)
        p = plan(m, od[0], od[1], params)
        rows.append(
            AblationRow(label, None if w is None else w.as_tuple(), path_cost(p.vertices, full), p.total_risk_cost, p.distance_m, p)
        )
    return rows


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def to_csv(rows: Sequence[Mapping]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def render_table(rows: Sequence[Mapping], floatfmt: str = ".4f") -> str:
    """Aligned plain-text table."""
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[format(r[c], floatfmt) if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    line = lambda vals: "  ".join(v.rjust(w) for v, w in zip(vals, widths))
    out = [line(cols), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in cells]
    return "\n".join(out) + "\n"


def summary_rows(summary: Sequence[SummaryRow], timing: bool = True) -> list[dict]:
    rows = []
    for s in summary:
        d = asdict(s)
        if not timing:
            d["time_fraction"] = None
            d["median_time_s"] = None
        rows.append(d)
    return rows
