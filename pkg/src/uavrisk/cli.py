"""Command-line front end: scenario generation, risk maps, planning and experiments.

Cell coordinates on the command line are 1-based. Exit codes: 0 success,
2 validation or parse error, 3 no path, 4 internal error. Relative output
paths are resolved against ``$UAVRISK_OUTPUT_DIR`` (default: cwd).
"""

from __future__ import annotations

import functools
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .eda import EdaParams, eda_fra_star, eda_ra_star
from .errors import NoPath, UavRiskError, ValidationError
from .evaluation import (
    params_digest,
    mitigation_experiment,
    render_table,
    risk_ablation,
    run_benchmark,
    summary_rows,
    to_csv,
)
from .grid import CellIndex, GridSpec
from .planning import HeuristicInfo, dijkstra_distance, dijkstra_risk, path_cost, risk_a_star, validate_path
from .risk import COMPONENTS, RiskWeights, UavModel, build_risk_map, layer_csv, risk_map_from_dict, risk_map_to_dict
from .scenario import ScenarioGenConfig, atomic_write_text, generate_scenario, load_scenario, save_scenario

OUTPUT_DIR_ENV = "UAVRISK_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_NO_PATH, EXIT_INTERNAL = 0, 2, 3, 4
ALGORITHMS = ("dijkstra", "riskastar", "eda-ra", "eda-fra", "distance")


def _out_path(path: str | None, default: str) -> Path:
    p = Path(path or default)
    if not p.is_absolute():
        p = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / p
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _provenance(seed: int | None, params: EdaParams | None = None) -> dict:
    d = {"tool": "uavrisk", "version": __version__, "seed": seed}
    if params is not None:
        d["params"] = params.to_dict()
        d["params_digest"] = params_digest(params)
    return d


def handled(fn):
    """Map package errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NoPath as exc:
            click.echo(f"error: no path: {exc}", err=True)
            sys.exit(EXIT_NO_PATH)
        except (ValidationError, json.JSONDecodeError, FileNotFoundError) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_INVALID)
        except UavRiskError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


def od_option(fn):
    return click.option(
        "--od",
        nargs=6,
        type=int,
        default=(1, 1, 1, 60, 60, 4),
        show_default=True,
        help="Origin and destination, 1-based: X1 Y1 Z1 X2 Y2 Z2.",
    )(fn)


def _od(values) -> tuple[CellIndex, CellIndex]:
    return CellIndex.from_one_based(values[:3]), CellIndex.from_one_based(values[3:])


def eda_options(fn):
    opts = [
        click.option("--seed", type=int, default=0, show_default=True, help="Master seed for every random draw."),
        click.option("--pop", "population_size", type=int, default=50, show_default=True),
        click.option("--iters", "iterations", type=int, default=100, show_default=True),
        click.option("--lr", "learning_rate", type=float, default=0.1, show_default=True),
        click.option("--dominant", "dominant_fraction", type=float, default=0.3, show_default=True),
        click.option("--k", "k_clusters", type=int, default=5, show_default=True),
        click.option("--inner", "inner_search", type=click.Choice(["dijkstra", "riskastar"]), default="dijkstra"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _eda_params(kw: dict) -> EdaParams:
    return EdaParams(
        population_size=kw.pop("population_size"),
        iterations=kw.pop("iterations"),
        learning_rate=kw.pop("learning_rate"),
        dominant_fraction=kw.pop("dominant_fraction"),
        k_clusters=kw.pop("k_clusters"),
        inner_search=kw.pop("inner_search"),
        rng_seed=kw.pop("seed"),
    )


def format_option(fn):
    return click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)(fn)


def timing_option(fn):
    return click.option("--no-timing", is_flag=True, help="Omit wall-clock times so outputs are byte-reproducible.")(fn)


@click.group()
@click.version_option(__version__, prog_name="uavrisk")
def main():
    """Risk-aware UAV path planning over urban risk maps."""


# --------------------------------------------------------------------------
# scenario-gen
# --------------------------------------------------------------------------


@main.command("scenario-gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", "grid_shape", nargs=3, type=int, default=(60, 60, 4), show_default=True, help="NX NY NZ cells.")
@click.option("--pop-range", nargs=2, type=float, default=(5e3, 25e3), show_default=True, help="People per km^2.")
@click.option("--districts", type=int, default=2, show_default=True)
@click.option("--amenities", nargs=2, type=int, default=(10, 30), show_default=True, help="Amenity count range.")
@click.option("--coverage", type=float, default=0.2, show_default=True, help="Fraction of ground cells with buildings.")
@click.option("--out", "out", type=str, default=None, help="Scenario JSON path.")
@handled
def scenario_gen(seed, grid_shape, pop_range, districts, amenities, coverage, out):
    """Generate a synthetic urban scenario."""
    cfg = ScenarioGenConfig(
        rng_seed=seed,
        n_districts=districts,
        pop_density_range=tuple(pop_range),
        amenity_count_range=tuple(amenities),
        building_coverage=coverage,
    )
    scn = generate_scenario(cfg, GridSpec(*grid_shape))
    path = _out_path(out, f"scenario_seed{seed}.json")
    save_scenario(scn, path)
    click.echo(f"seed: {seed}")
    click.echo(f"wrote {path}")


# --------------------------------------------------------------------------
# riskmap
# --------------------------------------------------------------------------


@main.command("riskmap")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--weights", nargs=3, type=float, default=(0.5, 0.25, 0.25), show_default=True, help="Fatality, property, noise.")
@click.option("--mass", type=float, default=None, help="UAV mass override in kg.")
@click.option("--out", type=str, default=None, help="Risk map JSON path.")
@click.option("--layer-csv", "write_layers", is_flag=True, help="Also write one CSV per altitude layer.")
@format_option
@handled
def riskmap(scenario, weights, mass, out, write_layers, fmt):
    """Build the risk map of a scenario file and summarize it per layer."""
    scn = load_scenario(scenario)
    uav = UavModel() if mass is None else replace(UavModel(), mass_kg=mass)
    m = build_risk_map(scn, uav=uav, weights=RiskWeights(*weights))
    for name in m.meta.get("zero_components", []):
        click.echo(f"warning: component '{name}' is zero everywhere (ZeroMaximum); left at 0", err=True)
    path = _out_path(out, Path(scenario).stem + "_riskmap.json")
    atomic_write_text(path, _dump(_clean(risk_map_to_dict(m))))
    stem = path.with_suffix("")
    summary = m.layer_summary()
    if write_layers:
        for z in range(m.spec.nz):
            atomic_write_text(Path(f"{stem}_layer{z + 1}.csv"), layer_csv(m, z))
    doc = {"weights": dict(zip(COMPONENTS, m.weights.as_tuple())), "layers": summary, **_provenance(None)}
    text = _dump(_clean(doc)) if fmt == "json" else to_csv(summary)
    atomic_write_text(Path(f"{stem}_summary.{fmt}"), text)
    click.echo(text, nl=False)


# --------------------------------------------------------------------------
# plan
# --------------------------------------------------------------------------


def _load_map(path):
    text = Path(path).read_text()
    return risk_map_from_dict(json.loads(text))


@main.command("plan")
@click.argument("map_file", type=click.Path(dir_okay=False))
@od_option
@click.option("--algo", type=click.Choice(ALGORITHMS), default="dijkstra", show_default=True)
@click.option("--heuristic-factor", type=float, default=None, help="RiskA* factor (cost per cell).")
@click.option("--heuristic-file", type=click.Path(dir_okay=False), default=None, help="RiskA* heuristic JSON.")
@click.option("--hard-deviation", is_flag=True, help="Discard nodes that deviate from the centroid track.")
@eda_options
@click.option("--out", type=str, default=None, help="Path JSON output.")
@click.option("--steps-csv", type=str, default=None, help="Optional per-step CSV.")
@click.option("--trace-csv", type=str, default=None, help="EDA convergence trace CSV.")
@timing_option
@handled
def plan(map_file, od, algo, heuristic_factor, heuristic_file, hard_deviation, out, steps_csv, trace_csv, no_timing, **kw):
    """Plan a path on a risk map file."""
    params = _eda_params(kw)
    if algo == "riskastar" and heuristic_factor is None and heuristic_file is None:
        raise click.UsageError("riskastar needs --heuristic-factor or --heuristic-file")
    m = _load_map(map_file)
    o, d = _od(od)
    for label, c in (("origin", o), ("destination", d)):
        m.spec.check(c)
        if m.occupied[c]:
            raise ValidationError(f"{label} {c.one_based()} (1-based) is occupied")

    if algo == "dijkstra":
        path = dijkstra_risk(m, o, d)
    elif algo == "distance":
        path = dijkstra_distance(m, o, d)
    elif algo == "riskastar":
        if heuristic_file is not None:
            hinfo = HeuristicInfo.from_dict(json.loads(Path(heuristic_file).read_text()))
        else:
            hinfo = HeuristicInfo(heuristic_factor)
        path = risk_a_star(m, o, d, hinfo, hard_deviation=hard_deviation)
    elif algo == "eda-ra":
        path = eda_ra_star(m, o, d, params)
    else:
        path = eda_fra_star(m, o, d, params)

    violation = validate_path(path.vertices, m.spec, m.occupied)
    recomputed = path_cost(path.vertices, m)
    if violation is not None or not math.isclose(recomputed, path.total_risk_cost, rel_tol=1e-9, abs_tol=1e-12):
        click.echo(f"error: planner output failed verification: {violation}", err=True)
        sys.exit(EXIT_INTERNAL)

    doc = path.to_dict(timing=not no_timing)
    doc["verified"] = {"valid": True, "recomputed_cost": recomputed}
    doc["provenance"] = _provenance(params.rng_seed, params if algo.startswith("eda") else None)
    target = _out_path(out, f"path_{algo}.json")
    atomic_write_text(target, _dump(_clean(doc)))
    if steps_csv:
        rows, acc = [], 0.0
        for i, v in enumerate(path.vertices):
            c = 0.0 if i == 0 else m.cost(v)
            acc += c
            x, y, z = v.one_based()
            rows.append({"step": i, "x": x, "y": y, "z": z, "cell_cost": c, "cumulative_cost": acc})
        atomic_write_text(_out_path(steps_csv, "steps.csv"), to_csv(rows))
    if trace_csv and path.trace is not None:
        atomic_write_text(_out_path(trace_csv, "trace.csv"), to_csv([r.__dict__ for r in path.trace]))
    click.echo(f"{algo}: cost {path.total_risk_cost:.6f}, distance {path.distance_m:.1f} m, {len(path.vertices)} vertices")
    click.echo(f"wrote {target}")


# --------------------------------------------------------------------------
# bench / mitigate / ablate
# --------------------------------------------------------------------------


def _write_outputs(out_dir: Path, name: str, rows: list[dict], doc: dict, fmt: str) -> None:
    atomic_write_text(out_dir / f"{name}.csv", to_csv(rows))
    atomic_write_text(out_dir / f"{name}_summary.json", _dump(_clean(doc)))


@main.command("bench")
@click.option("--scenarios", "n_scenarios", type=int, default=3, show_default=True, help="Generated scenarios (seeds seed..seed+n-1).")
@click.option("--algos", type=str, default="dijkstra,eda-ra,eda-fra", show_default=True)
@od_option
@eda_options
@click.option("--out-dir", type=str, default="bench", show_default=True)
@format_option
@timing_option
@handled
def bench(n_scenarios, algos, od, out_dir, fmt, no_timing, **kw):
    """Compare planners on generated scenarios against risk Dijkstra."""
    params = _eda_params(kw)
    names = [a.strip() for a in algos.split(",") if a.strip()]
    maps = {}
    for i in range(n_scenarios):
        seed = params.rng_seed + i
        maps[f"seed{seed}"] = build_risk_map(generate_scenario(ScenarioGenConfig(rng_seed=seed)))
    o, d = _od(od)
    records, summary = run_benchmark(maps, names, [(o, d)], params)
    rows = [r.row(timing=not no_timing) for r in records]
    srows = summary_rows(summary, timing=not no_timing)
    doc = {"summary": srows, "scenarios": list(maps), "od": list(od), **_provenance(params.rng_seed, params)}
    target = _out_path(out_dir, "bench")
    _write_outputs(target, "bench", rows, doc, fmt)
    click.echo(render_table(srows) if fmt == "csv" else _dump(_clean(doc)), nl=False)
    if records and all(not r.ok for r in records):
        sys.exit(EXIT_NO_PATH)


@main.command("mitigate")
@click.option("--n", "n_patterns", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pop-range", nargs=2, type=float, default=(5e3, 25e3), show_default=True)
@click.option("--z", "z_value", type=float, default=1.96, show_default=True)
@od_option
@click.option("--out-dir", type=str, default="mitigate", show_default=True)
@format_option
@handled
def mitigate(n_patterns, seed, pop_range, z_value, od, out_dir, fmt):
    """Risk of shortest vs minimum-risk paths over random patterns, with a CI."""
    cfg = ScenarioGenConfig(rng_seed=seed, pop_density_range=tuple(pop_range))
    res = mitigation_experiment(n_patterns, cfg, _od(od), z=z_value)
    rows = [s.__dict__ for s in res.samples]
    doc = {**res.to_dict(), "n_requested": n_patterns, "od": list(od), **_provenance(seed)}
    doc.pop("samples")
    target = _out_path(out_dir, "mitigate")
    _write_outputs(target, "mitigation", rows, doc, fmt)
    click.echo(_dump(_clean(doc)) if fmt == "json" else to_csv([res.ci.to_dict()]), nl=False)


@main.command("ablate")
@click.option("--scenario", "scenario_file", type=click.Path(dir_okay=False), default=None, help="Scenario JSON; default: generated from --seed.")
@click.option("--planner", type=click.Choice(["eda-fra", "eda-ra", "dijkstra"]), default="eda-fra", show_default=True)
@od_option
@eda_options
@click.option("--out-dir", type=str, default="ablate", show_default=True)
@format_option
@handled
def ablate(scenario_file, planner, od, out_dir, fmt, **kw):
    """Four paths adding one risk type at a time, scored on the full map."""
    params = _eda_params(kw)
    scn = load_scenario(scenario_file) if scenario_file else generate_scenario(ScenarioGenConfig(rng_seed=params.rng_seed))
    rows = [r.row() for r in risk_ablation(scn, od=_od(od), params=params, planner=planner)]
    doc = {"paths": rows, "planner": planner, "scenario": scn.name, "od": list(od), **_provenance(params.rng_seed, params)}
    target = _out_path(out_dir, "ablate")
    _write_outputs(target, "ablation", rows, doc, fmt)
    click.echo(render_table(rows) if fmt == "csv" else _dump(_clean(doc)), nl=False)


if __name__ == "__main__":
    main()
