"""Urban scenarios: districts, amenities, buildings; JSON I/O and a seeded generator.

Scenario file (version 1)::

    {
      "version": 1,
      "name": "...",
      "grid": {"nx": 60, "ny": 60, "nz": 4, "unit_m": [100, 100, 30]},
      "districts": [{"rect": [x0, y0, x1, y1], "pop_avg": 8358, "veh_avg": 7120}],
      "amenities": [{"x_m": 1250.0, "y_m": 430.0}],
      "buildings": {"encoding": "dense-rowmajor", "heights": [...]},
      "shelter": {"s_c": 0.5}
    }

District rectangles are 0-based, half-open ground-cell ranges
``[x0, x1) x [y0, y1)``. Building heights are listed x-fastest:
``heights[x + nx * y]``. Distances are meters, densities per km^2.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, MissingDistrict, ParseError, SchemaVersionMismatch, ValidationError
from .grid import GridSpec, default_grid
from .risk import DEFAULT_LOG_HEIGHT_MEAN, Amenity, ShelterModel

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class District:
    rect: tuple[int, int, int, int]
    pop_avg: float
    veh_avg: float

    def __post_init__(self):
        object.__setattr__(self, "rect", tuple(int(v) for v in self.rect))
        x0, y0, x1, y1 = self.rect
        if not (x0 < x1 and y0 < y1):
            raise ValidationError(f"empty district rectangle {self.rect}")
        if self.pop_avg < 0 or self.veh_avg < 0:
            raise ValidationError("district densities must be >= 0")


@dataclass(eq=False)
class UrbanScenario:
    grid: GridSpec
    districts: list[District]
    amenities: list[Amenity]
    building_heights: np.ndarray
    shelter: ShelterModel = field(default_factory=ShelterModel)
    name: str = "scenario"

    def __post_init__(self):
        h = np.asarray(self.building_heights, dtype=float)
        if h.shape != (self.grid.nx, self.grid.ny):
            raise ValidationError(f"building heights shape {h.shape} != footprint {(self.grid.nx, self.grid.ny)}")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValidationError("building heights must be finite and >= 0")
        self.building_heights = h
        cover = np.zeros((self.grid.nx, self.grid.ny), dtype=int)
        for d in self.districts:
            x0, y0, x1, y1 = d.rect
            if x0 < 0 or y0 < 0 or x1 > self.grid.nx or y1 > self.grid.ny:
                raise ValidationError(f"district {d.rect} extends outside the footprint")
            cover[x0:x1, y0:y1] += 1
        if np.any(cover == 0):
            x, y = np.argwhere(cover == 0)[0]
            raise MissingDistrict(f"ground cell ({x}, {y}) is not covered by any district")
        if np.any(cover > 1):
            x, y = np.argwhere(cover > 1)[0]
            raise ValidationError(f"ground cell ({x}, {y}) belongs to more than one district")

    def __eq__(self, other):
        if not isinstance(other, UrbanScenario):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.districts == other.districts
            and self.amenities == other.amenities
            and np.array_equal(self.building_heights, other.building_heights)
            and self.shelter == other.shelter
            and self.name == other.name
        )

    def district_map(self) -> np.ndarray:
        """Index of the owning district for each ground cell, shape (nx, ny)."""
        out = np.empty((self.grid.nx, self.grid.ny), dtype=int)
        for i, d in enumerate(self.districts):
            x0, y0, x1, y1 = d.rect
            out[x0:x1, y0:y1] = i
        return out

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "grid": self.grid.to_dict(),
            "districts": [
                {"rect": list(d.rect), "pop_avg": d.pop_avg, "veh_avg": d.veh_avg} for d in self.districts
            ],
            "amenities": [
                {"x_m": a.x_m, "y_m": a.y_m}
                if a.influence_radius_km == 1.0
                else {"x_m": a.x_m, "y_m": a.y_m, "radius_km": a.influence_radius_km}
                for a in self.amenities
            ],
            "buildings": {
                "encoding": "dense-rowmajor",
                "heights": self.building_heights.ravel(order="F").tolist(),
            },
            "shelter": {"s_c": self.shelter.sheltering_coeff},
        }


@dataclass(frozen=True)
class ScenarioGenConfig:
    rng_seed: int = 0
    n_districts: int = 2
    pop_density_range: tuple[float, float] = (5e3, 25e3)
    pop_density_step: float = 1e3
    traffic_density: float = 7.12e3
    amenity_count_range: tuple[int, int] = (10, 30)
    building_log_mean: float = DEFAULT_LOG_HEIGHT_MEAN
    building_log_std: float = 0.5
    building_coverage: float = 0.2
    sheltering_coeff: float = 0.5
    # Ground cells kept free of buildings so the default corner OD pair stays usable.
    keep_clear: tuple[tuple[int, int], ...] = ((0, 0), (-1, -1))

    def validate(self) -> None:
        lo, hi = self.pop_density_range
        if not 0 <= lo <= hi:
            raise InvalidConfig(f"pop_density_range {self.pop_density_range} is empty or negative")
        if self.pop_density_step <= 0:
            raise InvalidConfig("pop_density_step must be > 0")
        if math.ceil(lo / self.pop_density_step) > math.floor(hi / self.pop_density_step):
            raise InvalidConfig("pop_density_range contains no multiple of pop_density_step")
        a_lo, a_hi = self.amenity_count_range
        if not 0 <= a_lo <= a_hi:
            raise InvalidConfig(f"amenity_count_range {self.amenity_count_range} is empty or negative")
        if self.n_districts < 1:
            raise InvalidConfig("n_districts must be >= 1")
        if not 0 <= self.building_coverage <= 1:
            raise InvalidConfig("building_coverage must lie in [0, 1]")
        if self.building_log_std < 0:
            raise InvalidConfig("building_log_std must be >= 0")
        if self.traffic_density < 0:
            raise InvalidConfig("traffic_density must be >= 0")
        if not 0 < self.sheltering_coeff <= 1:
            raise InvalidConfig("sheltering_coeff must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "n_districts": self.n_districts,
            "pop_density_range": list(self.pop_density_range),
            "pop_density_step": self.pop_density_step,
            "traffic_density": self.traffic_density,
            "amenity_count_range": list(self.amenity_count_range),
            "building_log_mean": self.building_log_mean,
            "building_log_std": self.building_log_std,
            "building_coverage": self.building_coverage,
            "sheltering_coeff": self.sheltering_coeff,
            "keep_clear": [list(c) for c in self.keep_clear],
        }


def generate_scenario(cfg: ScenarioGenConfig = ScenarioGenConfig(), spec: GridSpec | None = None) -> UrbanScenario:
    """Random urban pattern; a pure function of ``(cfg, spec)``.

    Districts are equal-width vertical strips along x. Population densities
    are drawn uniformly from the multiples of ``pop_density_step`` inside
    ``pop_density_range``; amenities are uniform over the footprint; a random
    ``building_coverage`` fraction of ground cells receives a log-normal height.
    """
    cfg.validate()
    spec = spec or default_grid()
    if cfg.n_districts > spec.nx:
        raise InvalidConfig(f"{cfg.n_districts} districts do not fit into {spec.nx} columns")
    rng = np.random.default_rng(cfg.rng_seed)

    cuts = np.linspace(0, spec.nx, cfg.n_districts + 1).round().astype(int)
    lo_k = math.ceil(cfg.pop_density_range[0] / cfg.pop_density_step)
    hi_k = math.floor(cfg.pop_density_range[1] / cfg.pop_density_step)
    districts = []
    for i in range(cfg.n_districts):
        pop = float(rng.integers(lo_k, hi_k + 1) * cfg.pop_density_step)
        districts.append(District((int(cuts[i]), 0, int(cuts[i + 1]), spec.ny), pop, float(cfg.traffic_density)))

    n_amen = int(rng.integers(cfg.amenity_count_range[0], cfg.amenity_count_range[1] + 1))
    ax = spec.ground_origin[0] + rng.random(n_amen) * spec.nx * spec.unit_x
    ay = spec.ground_origin[1] + rng.random(n_amen) * spec.ny * spec.unit_y
    amenities = [Amenity(float(x), float(y)) for x, y in zip(ax, ay)]

    heights = np.zeros((spec.nx, spec.ny))
    candidates = np.ones((spec.nx, spec.ny), dtype=bool)
    for cx, cy in cfg.keep_clear:
        candidates[cx, cy] = False
    flat_candidates = np.flatnonzero(candidates.ravel())
    n_build = int(round(cfg.building_coverage * flat_candidates.size))
    chosen = rng.choice(flat_candidates, size=n_build, replace=False)
    values = rng.lognormal(cfg.building_log_mean, cfg.building_log_std, size=n_build)
    heights.ravel()[np.sort(chosen)] = values

    return UrbanScenario(
        grid=spec,
        districts=districts,
        amenities=amenities,
        building_heights=heights,
        shelter=ShelterModel(cfg.sheltering_coeff),
        name=f"synthetic-seed{cfg.rng_seed}",
    )


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def _line_of(text: str, needle: str) -> int | None:
    pos = text.find(needle)
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


def _number(obj, key, field_name, text, minimum=None):
    if key not in obj:
        raise ParseError("missing required value", field_name)
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"expected a finite number, got {v!r}", field_name, _line_of(text, f'"{key}"'))
    if minimum is not None and v < minimum:
        raise ParseError(f"value {v} must be >= {minimum}", field_name, _line_of(text, f'"{key}": {v}'))
    return v


def scenario_from_dict(d: dict, text: str = "") -> UrbanScenario:
    if not isinstance(d, dict):
        raise ParseError("top level must be a JSON object")
    version = d.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})", "version")
    try:
        g = d["grid"]
        grid = GridSpec.from_dict(g)
    except KeyError as exc:
        raise ParseError(f"missing {exc.args[0]!r}", "grid") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), "grid") from None

    districts = []
    for i, item in enumerate(d.get("districts") or []):
        fname = f"districts[{i}]"
        rect = item.get("rect")
        if not (isinstance(rect, list) and len(rect) == 4 and all(isinstance(v, int) for v in rect)):
            raise ParseError("rect must be 4 integers [x0, y0, x1, y1]", f"{fname}.rect")
        pop = _number(item, "pop_avg", f"{fname}.pop_avg", text, minimum=0)
        veh = _number(item, "veh_avg", f"{fname}.veh_avg", text, minimum=0)
        try:
            districts.append(District(tuple(rect), float(pop), float(veh)))
        except ValidationError as exc:
            raise ParseError(str(exc), fname) from None
    if not districts:
        raise ParseError("at least one district is required", "districts")

    amenities = []
    for i, item in enumerate(d.get("amenities") or []):
        fname = f"amenities[{i}]"
        x = _number(item, "x_m", f"{fname}.x_m", text)
        y = _number(item, "y_m", f"{fname}.y_m", text)
        r = item.get("radius_km", 1.0)
        if not isinstance(r, (int, float)) or not r > 0:
            raise ParseError("radius_km must be > 0", f"{fname}.radius_km")
        amenities.append(Amenity(float(x), float(y), float(r)))

    b = d.get("buildings")
    if b is None:
        heights = np.zeros((grid.nx, grid.ny))
    else:
        if b.get("encoding") != "dense-rowmajor":
            raise ParseError(f"unsupported encoding {b.get('encoding')!r}", "buildings.encoding")
        raw = b.get("heights")
        if not isinstance(raw, list) or len(raw) != grid.nx * grid.ny:
            raise ParseError(f"expected {grid.nx * grid.ny} heights", "buildings.heights")
        arr = np.asarray(raw, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            bad = int(np.flatnonzero(~np.isfinite(arr) | (arr < 0))[0])
            raise ParseError(f"height {raw[bad]!r} at position {bad} must be finite and >= 0", "buildings.heights")
        heights = arr.reshape((grid.nx, grid.ny), order="F")

    s = d.get("shelter") or {}
    try:
        shelter = ShelterModel(float(s.get("s_c", 0.5)))
    except (TypeError, ValidationError) as exc:
        raise ParseError(str(exc), "shelter.s_c") from None

    try:
        return UrbanScenario(grid, districts, amenities, heights, shelter, str(d.get("name", "scenario")))
    except ValidationError as exc:
        raise ParseError(str(exc), "districts") from None


def scenario_to_json(scn: UrbanScenario) -> str:
    return json.dumps(scn.to_dict(), indent=1) + "\n"


def load_scenario(path) -> UrbanScenario:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return scenario_from_dict(d, text)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scenario(scn: UrbanScenario, path) -> None:
    atomic_write_text(path, scenario_to_json(scn))
