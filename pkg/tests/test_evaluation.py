import math

import numpy as np
import pytest
from conftest import random_map

from uavrisk.eda import EdaParams
from uavrisk.errors import DegenerateGroup, ValidationError
from uavrisk.evaluation import (
    ABLATION_WEIGHTS,
    BenchmarkRecord,
    ci_from_stats,
    confidence_interval,
    mitigation_experiment,
    params_digest,
    render_table,
    risk_ablation,
    run_benchmark,
    summarize,
    summary_rows,
    to_csv,
)
from uavrisk.grid import GridSpec
from uavrisk.planning import dijkstra_risk
from uavrisk.risk import RiskMap, RiskWeights, build_risk_map
from uavrisk.scenario import ScenarioGenConfig, generate_scenario

TINY = EdaParams(population_size=6, iterations=4, rng_seed=1)
OD = ((0, 0, 0), (5, 5, 2))


def maps(n=3):
    return {f"m{i}": random_map(i, shape=(6, 6, 3)) for i in range(n)}


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------


def test_benchmark_cartesian_product():
    records, summary = run_benchmark(maps(3), ["dijkstra", "distance"], [OD], TINY)
    assert len(records) == 6
    assert {(r.scenario_id, r.algorithm) for r in records} == {(f"m{i}", a) for i in range(3) for a in ("dijkstra", "distance")}
    assert [s.algorithm for s in summary] == ["dijkstra", "distance"]


def test_dijkstra_row_is_unity():
    _, summary = run_benchmark(maps(4), ["dijkstra", "eda-fra", "eda-ra"], [OD], TINY)
    ref = summary[0]
    assert ref.algorithm == "dijkstra"
    assert ref.cost_ratio_mean == 1.0 and ref.cost_ratio_std == 0.0
    assert ref.distance_ratio_mean == 1.0 and ref.time_fraction == pytest.approx(1.0)
    for row in summary:
        assert row.cost_ratio_mean >= 1.0
        assert row.failures == 0


def test_summary_recomputable_from_records():
    records, summary = run_benchmark(maps(3), ["eda-fra", "dijkstra"], [OD, ((0, 5, 0), (5, 0, 2))], TINY)
    assert summarize(records) == summary
    ref = {(r.scenario_id, r.origin, r.destination): r for r in records if r.algorithm == "dijkstra"}
    mine = [r for r in records if r.algorithm == "eda-fra"]
    ratios = [r.total_risk_cost / ref[(r.scenario_id, r.origin, r.destination)].total_risk_cost for r in mine]
    row = next(s for s in summary if s.algorithm == "eda-fra")
    assert row.cost_ratio_mean == pytest.approx(np.mean(ratios), rel=1e-12)
    assert row.cost_ratio_std == pytest.approx(np.std(ratios, ddof=1), rel=1e-12)
    assert row.runs == 6


def test_hidden_reference_when_dijkstra_not_requested():
    records, summary = run_benchmark(maps(2), ["distance"], [OD], TINY)
    assert {r.algorithm for r in records} == {"distance"}
    assert summary[0].cost_ratio_mean >= 1.0
    assert math.isfinite(summary[0].time_fraction)


def test_benchmark_records_failures():
    spec = GridSpec(3, 3, 1)
    costs = np.ones(spec.shape)
    costs[1, :, 0] = np.inf
    m = RiskMap.from_costs(spec, costs)
    records, summary = run_benchmark({"walled": m}, ["dijkstra"], [((0, 0, 0), (2, 2, 0))], TINY)
    assert not records[0].ok and "NoPath" in records[0].error
    assert summary[0].failures == 1 and math.isnan(summary[0].cost_ratio_mean)


def test_benchmark_validation():
    with pytest.raises(ValidationError):
        run_benchmark({}, ["dijkstra"], [OD])
    with pytest.raises(ValidationError):
        run_benchmark(maps(1), [], [OD])
    with pytest.raises(ValidationError):
        run_benchmark(maps(1), ["aco"], [OD])
    with pytest.raises(ValidationError):
        BenchmarkRecord("s", "a", (0, 0, 0), (1, 1, 1), -1.0, 0.0, 0.0, 0, 0, "x")


def test_record_rows_and_tables():
    records, summary = run_benchmark(maps(1), ["dijkstra"], [OD], TINY)
    row = records[0].row(timing=False)
    assert row["origin"] == "1 1 1" and row["destination"] == "6 6 3"
    assert row["wall_time_s"] is None
    text = to_csv([row])
    assert text.splitlines()[0].startswith("scenario_id,algorithm")
    table = render_table(summary_rows(summary, timing=False))
    assert "dijkstra" in table and "cost_ratio_mean" in table
    assert params_digest(TINY) == params_digest(TINY.to_dict())
    assert params_digest(TINY) != params_digest(EdaParams())


# --------------------------------------------------------------------------
# confidence interval
# --------------------------------------------------------------------------


def test_ci_table_inputs():
    # delta = 14247, se = sqrt(1594657/100 + 4859067/100) = 254.04
    ci = ci_from_stats(100, 100, 18584, 32831, 1594657, 4859067)
    se = math.sqrt((1594657 + 4859067) / 100)
    assert se == pytest.approx(254.04, abs=0.01)
    assert ci.interval_low == pytest.approx((14247 - 1.96 * se) / 32831, rel=1e-12)
    assert ci.interval_low == pytest.approx(0.4188, abs=5e-5)
    assert ci.interval_high == pytest.approx(0.4491, abs=5e-5)


def test_ci_identical_groups_symmetric():
    g = [3.0, 4.0, 5.0, 9.0]
    ci = confidence_interval(g, g)
    assert ci.interval_low == pytest.approx(-ci.interval_high)
    assert ci.point == 0.0


def test_ci_zero_z_has_zero_width():
    ci = confidence_interval([1.0, 2.0, 3.0], [4.0, 6.0, 8.0], z=0.0)
    assert ci.interval_low == ci.interval_high == pytest.approx((6.0 - 2.0) / 6.0)


def test_ci_uses_unbiased_variance():
    a, b = [1.0, 2.0, 4.0], [5.0, 7.0, 12.0]
    ci = confidence_interval(a, b)
    assert ci.var1 == pytest.approx(np.var(a, ddof=1)) and ci.var2 == pytest.approx(np.var(b, ddof=1))
    assert ci.interval_low <= ci.interval_high


def test_ci_width_scales_with_sqrt_n():
    rng = np.random.default_rng(0)
    widths = {}
    for n in (25, 100, 400):
        w = []
        for _ in range(40):
            ci = confidence_interval(rng.normal(10, 2, n), rng.normal(20, 3, n))
            w.append(ci.interval_high - ci.interval_low)
        widths[n] = np.mean(w)
    assert widths[25] / widths[100] == pytest.approx(2.0, rel=0.2)
    assert widths[100] / widths[400] == pytest.approx(2.0, rel=0.2)


def test_ci_degenerate_groups():
    with pytest.raises(DegenerateGroup):
        confidence_interval([1.0], [1.0, 2.0])
    with pytest.raises(DegenerateGroup):
        ci_from_stats(10, 10, 1.0, 0.0, 1.0, 1.0)


# --------------------------------------------------------------------------
# mitigation and ablation
# --------------------------------------------------------------------------


def test_mitigation_never_worse():
    res = mitigation_experiment(4, ScenarioGenConfig(rng_seed=100))
    assert len(res.samples) + len(res.excluded) == 4
    for s in res.samples:
        assert s.mitigated <= s.unmitigated
    assert [s.seed for s in res.samples] == [100, 101, 102, 103]
    assert res.ci.interval_low <= res.ci.interval_high
    assert set(res.to_dict()) == {"samples", "excluded_seeds", "ci"}


@pytest.mark.parametrize("od", [((0, 0, 0), (59, 59, 3)), ((0, 0, 0), (59, 59, 0))])
def test_mitigation_flat_uniform_map_has_no_gain(od):
    cfg = ScenarioGenConfig(
        rng_seed=7, n_districts=1, amenity_count_range=(0, 0), building_coverage=0.0, pop_density_range=(8e3, 8e3)
    )
    res = mitigation_experiment(3, cfg, od, weights=RiskWeights(1.0, 0.0, 0.0))
    for s in res.samples:
        assert s.mitigated == pytest.approx(s.unmitigated, rel=1e-12)


def test_mitigation_excludes_blocked_patterns():
    cfg = ScenarioGenConfig(rng_seed=0, building_coverage=1.0, keep_clear=())
    # every pattern has occupied endpoints, so nothing is left to compare
    with pytest.raises(DegenerateGroup):
        mitigation_experiment(2, cfg, ((0, 0, 0), (5, 5, 0)), spec=GridSpec(6, 6, 2))


def test_ablation_weights():
    assert ABLATION_WEIGHTS["path1"] is None
    assert ABLATION_WEIGHTS["path2"].as_tuple() == (1.0, 0.0, 0.0)
    assert ABLATION_WEIGHTS["path3"].as_tuple() == pytest.approx((2 / 3, 1 / 3, 0.0))
    assert ABLATION_WEIGHTS["path4"].as_tuple() == (0.5, 0.25, 0.25)


def test_ablation_rows_on_small_scenario():
    spec = GridSpec(15, 15, 4)
    scn = generate_scenario(ScenarioGenConfig(rng_seed=2), spec)
    rows = risk_ablation(scn, spec, od=((0, 0, 0), (14, 14, 3)), planner="dijkstra")
    assert [r.label for r in rows] == ["path1", "path2", "path3", "path4"]
    full = rows[3]
    best = dijkstra_risk(build_risk_map(scn, spec), (0, 0, 0), (14, 14, 3)).total_risk_cost
    # every path is scored on the full map, where path4 is the optimum
    assert full.full_risk_cost == pytest.approx(best, rel=1e-12)
    assert all(r.full_risk_cost >= best - 1e-12 for r in rows)
    # the uniform-cost plan takes the fewest moves
    assert len(rows[0].path.vertices) == min(len(r.path.vertices) for r in rows)
    assert rows[0].row()["weights"] == "uniform"
