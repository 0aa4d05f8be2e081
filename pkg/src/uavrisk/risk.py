"""Third-party risk cost models and their aggregation into a 3D risk map.

Units: densities are per km^2, areas in m^2, heights in m, energies in J.
Fatality costs are expected fatalities per flight hour; property and noise
costs are dimensionless indices that only matter after normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    MissingDistrict,
    NonPositiveEnergy,
    NonPositiveHeight,
    ValidationError,
    ZeroMaximum,
)
from .grid import GridSpec, OccupancyGrid, layer_altitude, mark_obstacles

if TYPE_CHECKING:
    from .scenario import UrbanScenario

COMPONENTS = ("fatality", "property", "noise")

DEFAULT_LOG_HEIGHT_MEAN = 3.0467
DEFAULT_LOG_HEIGHT_STD = 0.5
VEHICLE_ACCIDENT_FATALITY_RATE = 0.27
NOISE_LATERAL_OFFSET_M = 9.144  # 30 ft
NOISE_REFERENCE_DB = 60.0
NOISE_HEIGHT_THRESHOLD_M = 40.0


@dataclass(frozen=True)
class UavModel:
    """Physical and reliability parameters; defaults describe a DJI Phantom 4."""

    mass_kg: float = 1.38
    drag_coeff: float = 0.3
    impact_area_m2: float = 0.0188
    crash_prob_per_hour: float = 6.04e-5
    air_density_kg_m3: float = 1.225
    gravity_m_s2: float = 9.8

    def __post_init__(self):
        for name in ("mass_kg", "drag_coeff", "impact_area_m2", "air_density_kg_m3", "gravity_m_s2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"UavModel.{name} must be > 0, got {v!r}")
        if not 0 < self.crash_prob_per_hour < 1:
            raise ValidationError("UavModel.crash_prob_per_hour must lie in (0, 1)")

    @property
    def drag_factor(self) -> float:
        """R_I * S_hit * rho_A, the lumped drag term of the falling body."""
        return self.drag_coeff * self.impact_area_m2 * self.air_density_kg_m3

    @property
    def terminal_velocity(self) -> float:
        return math.sqrt(2 * self.mass_kg * self.gravity_m_s2 / self.drag_factor)


@dataclass(frozen=True)
class Amenity:
    x_m: float
    y_m: float
    influence_radius_km: float = 1.0

    def __post_init__(self):
        if not self.influence_radius_km > 0:
            raise ValidationError("amenity influence radius must be > 0")


@dataclass(frozen=True)
class ShelterModel:
    sheltering_coeff: float = 0.5
    fatality_energy_alpha_J: float = 1e6
    fatality_energy_beta_J: float = 100.0

    def __post_init__(self):
        if not 0 < self.sheltering_coeff <= 1:
            raise ValidationError("sheltering coefficient must lie in (0, 1]")
        if not self.fatality_energy_alpha_J > self.fatality_energy_beta_J > 0:
            raise ValidationError("shelter model needs alpha > beta > 0")


@dataclass(frozen=True)
class RiskWeights:
    fatality: float = 0.5
    property: float = 0.25
    noise: float = 0.25

    def __post_init__(self):
        ws = self.as_tuple()
        if any(not 0 <= w <= 1 for w in ws):
            raise ValidationError(f"risk weights must lie in [0, 1], got {ws}")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValidationError(f"risk weights must sum to 1, got {sum(ws)!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.fatality, self.property, self.noise)


@dataclass(frozen=True, eq=False)
class DensityField:
    population: np.ndarray  # people / km^2, shape (nx, ny)
    traffic: np.ndarray  # vehicles / km^2, shape (nx, ny)


# --------------------------------------------------------------------------
# Scalar models
# --------------------------------------------------------------------------


def gravity_factor(r_km):
    """Amenity attraction multiplier e^(1 - r^2); r is the distance in km."""
    r = np.asarray(r_km, dtype=float)
    if np.any(r < 0):
        raise ValidationError("distance to amenity must be >= 0")
    out = np.exp(1.0 - r * r)
    return float(out) if out.ndim == 0 else out


def impact_velocity(uav: UavModel, h_m):
    """Ground-impact speed after a drag-limited free fall from height ``h_m``."""
    h = np.asarray(h_m, dtype=float)
    if np.any(h < 0):
        raise NonPositiveHeight("fall height must be >= 0")
    k = uav.drag_factor
    v = np.sqrt(2 * uav.mass_kg * uav.gravity_m_s2 / k * -np.expm1(-h * k / uav.mass_kg))
    return float(v) if v.ndim == 0 else v


def impact_energy(uav: UavModel, h_m):
    v = np.asarray(impact_velocity(uav, h_m))
    e = 0.5 * uav.mass_kg * v * v
    return float(e) if e.ndim == 0 else e


def fatality_rate_person(energy_J, shelter: ShelterModel = ShelterModel()):
    """Probability that an impact of the given kinetic energy kills a person.

    R = 1 / (1 + sqrt(alpha/beta) * (beta/E)^(1/(4 S_c))).
    """
    e = np.asarray(energy_J, dtype=float)
    if np.any(e <= 0):
        raise NonPositiveEnergy("impact energy must be > 0")
    a, b = shelter.fatality_energy_alpha_J, shelter.fatality_energy_beta_J
    k = math.sqrt(a / b) * np.power(b / e, 1.0 / (4.0 * shelter.sheltering_coeff))
    r = 1.0 / (1.0 + k)
    return float(r) if r.ndim == 0 else r


def people_risk(uav: UavModel, pop_density_km2, h_m, shelter: ShelterModel = ShelterModel()):
    """Expected pedestrian fatalities per flight hour."""
    sigma = np.asarray(pop_density_km2, dtype=float)
    if np.any(sigma < 0):
        raise ValidationError("population density must be >= 0")
    if np.any(np.asarray(h_m) <= 0):
        raise NonPositiveHeight("flight height must be > 0")
    n_hit = uav.impact_area_m2 * sigma / 1e6
    out = uav.crash_prob_per_hour * n_hit * fatality_rate_person(impact_energy(uav, h_m), shelter)
    return float(out) if np.ndim(out) == 0 else out


def vehicle_risk(uav: UavModel, traffic_density_km2, accident_fatality_rate=VEHICLE_ACCIDENT_FATALITY_RATE):
    """Expected fatalities per flight hour from a falling UAV striking traffic."""
    sigma = np.asarray(traffic_density_km2, dtype=float)
    if np.any(sigma < 0) or accident_fatality_rate < 0:
        raise ValidationError("traffic density and accident fatality rate must be >= 0")
    out = uav.crash_prob_per_hour * (uav.impact_area_m2 * sigma / 1e6) * accident_fatality_rate
    return float(out) if np.ndim(out) == 0 else out


def lognormal_pdf(h, mu: float, sigma: float):
    h = np.asarray(h, dtype=float)
    z = (np.log(h) - mu) / sigma
    return np.exp(-0.5 * z * z) / (h * sigma * math.sqrt(2 * math.pi))


def property_risk(h_m, mu_log: float = DEFAULT_LOG_HEIGHT_MEAN, sigma_log: float = DEFAULT_LOG_HEIGHT_STD):
    """Building-collision / efficiency cost; flat below the median height e^mu."""
    h = np.asarray(h_m, dtype=float)
    if np.any(h <= 0):
        raise NonPositiveHeight("flight height must be > 0")
    if not sigma_log > 0:
        raise ValidationError("sigma_log must be > 0")
    out = lognormal_pdf(np.maximum(h, math.exp(mu_log)), mu_log, sigma_log)
    return float(out) if out.ndim == 0 else out


def noise_risk(
    h_m,
    lateral_offset_m: float = NOISE_LATERAL_OFFSET_M,
    reference_dB: float = NOISE_REFERENCE_DB,
    threshold_height_m: float = NOISE_HEIGHT_THRESHOLD_M,
):
    """Spherical-spreading noise index L_h / (h^2 + d^2), zero at or above the threshold."""
    h = np.asarray(h_m, dtype=float)
    if np.any(h <= 0):
        raise NonPositiveHeight("flight height must be > 0")
    out = np.where(h < threshold_height_m, reference_dB / (h * h + lateral_offset_m**2), 0.0)
    return float(out) if out.ndim == 0 else out


def fit_height_distribution(building_heights) -> tuple[float, float]:
    """Mean and standard deviation of ln(height) over cells with a building.

    Falls back to the default mean/std when there are no buildings, and to
    the default std when all buildings share one height.
    """
    h = np.asarray(building_heights, dtype=float)
    logs = np.log(h[h > 0])
    if logs.size == 0:
        return DEFAULT_LOG_HEIGHT_MEAN, DEFAULT_LOG_HEIGHT_STD
    sd = float(logs.std())
    if not sd > 1e-12:
        sd = DEFAULT_LOG_HEIGHT_STD
    return float(logs.mean()), sd


# --------------------------------------------------------------------------
# Fields
# --------------------------------------------------------------------------


def nearest_amenity_distance_km(spec: GridSpec, amenities: Sequence[Amenity]) -> np.ndarray | None:
    """Per ground cell, min over amenities of distance / influence radius (km / km)."""
    if not amenities:
        return None
    gx, gy = spec.ground_centers()
    best = np.full(gx.shape, np.inf)
    for a in amenities:
        d = np.hypot(gx - a.x_m, gy - a.y_m) / 1000.0 / a.influence_radius_km
        np.minimum(best, d, out=best)
    return best


def estimate_densities(scenario: "UrbanScenario", spec: GridSpec | None = None) -> DensityField:
    spec = spec or scenario.grid
    if (spec.nx, spec.ny) != (scenario.grid.nx, scenario.grid.ny):
        raise DimensionMismatch("scenario footprint does not match grid")
    pop = np.full((spec.nx, spec.ny), np.nan)
    veh = np.full((spec.nx, spec.ny), np.nan)
    for d in scenario.districts:
        x0, y0, x1, y1 = d.rect
        pop[x0:x1, y0:y1] = d.pop_avg
        veh[x0:x1, y0:y1] = d.veh_avg
    if np.isnan(pop).any():
        x, y = np.argwhere(np.isnan(pop))[0]
        raise MissingDistrict(f"ground cell ({x}, {y}) is not covered by any district")
    r = nearest_amenity_distance_km(spec, scenario.amenities)
    if r is not None:
        factor = gravity_factor(r)
        pop = pop * factor
        veh = veh * factor
    return DensityField(pop, veh)


def normalize_components(raw: dict[str, np.ndarray], valid: np.ndarray | None = None):
    """Divide every component by its maximum over ``valid`` cells.

    Returns ``(normalized, omegas)`` with ``omegas[name] = 1 / max``.
    Raises ZeroMaximum for the first component whose maximum is not positive.
    """
    normalized, omegas = {}, {}
    for name, arr in raw.items():
        arr = np.asarray(arr, dtype=float)
        sel = arr if valid is None else arr[valid]
        m = float(sel.max()) if sel.size else 0.0
        if not m > 0:
            raise ZeroMaximum(name)
        omegas[name] = 1.0 / m
        normalized[name] = arr / m
    return normalized, omegas


@dataclass(eq=False)
class RiskMap:
    """Per-cell risk components and weighted total cost over a 3D grid.

    All arrays are shaped ``spec.shape``. ``total`` is +inf on occupied cells.
    ``raw``/``normalized`` are keyed by component name (fatality, property, noise).
    """

    spec: GridSpec
    occupied: np.ndarray
    total: np.ndarray
    raw: dict[str, np.ndarray] = field(default_factory=dict)
    normalized: dict[str, np.ndarray] = field(default_factory=dict)
    omega: dict[str, float] = field(default_factory=dict)
    weights: RiskWeights | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.occupied = np.asarray(self.occupied, dtype=bool)
        self.total = np.asarray(self.total, dtype=float)
        for arr in (self.occupied, self.total, *self.raw.values(), *self.normalized.values()):
            if arr.shape != self.spec.shape:
                raise DimensionMismatch(f"array shape {arr.shape} != grid {self.spec.shape}")
        if np.any(np.isnan(self.total)) or np.any(self.total[~self.occupied] < 0):
            raise ValidationError("risk costs must be finite and >= 0 on unoccupied cells")

    @classmethod
    def from_costs(cls, spec: GridSpec, costs, occupied=None) -> "RiskMap":
        """Map with a given per-cell cost field (occupied cells forced to +inf)."""
        costs = np.asarray(costs, dtype=float)
        occ = np.isinf(costs) if occupied is None else np.asarray(occupied, dtype=bool) | np.isinf(costs)
        total = np.where(occ, np.inf, costs)
        return cls(spec, occ, total)

    @property
    def occupancy(self) -> OccupancyGrid:
        return OccupancyGrid(self.spec, self.occupied)

    def cost(self, c) -> float:
        return float(self.total[tuple(c)])

    def max_finite_cost(self) -> float:
        free = self.total[~self.occupied]
        return float(free.max()) if free.size else 0.0

    def layer_summary(self) -> list[dict]:
        rows = []
        for z in range(self.spec.nz):
            free = self.total[:, :, z][~self.occupied[:, :, z]]
            rows.append(
                {
                    "layer": z + 1,
                    "altitude_m": layer_altitude(self.spec, z),
                    "free_cells": int(free.size),
                    "mean_total": float(free.mean()) if free.size else float("nan"),
                    "max_total": float(free.max()) if free.size else float("nan"),
                }
            )
            # weighted contribution of each component to the layer mean
            w = self.weights.as_tuple() if self.weights is not None else (math.nan,) * 3
            for name, wi in zip(COMPONENTS, w):
                comp = self.normalized.get(name)
                val = float("nan")
                if comp is not None and free.size:
                    val = float(wi * comp[:, :, z][~self.occupied[:, :, z]].mean())
                rows[-1][f"mean_{name}"] = val
        return rows

    def with_weights(self, weights: RiskWeights) -> "RiskMap":
        """Re-aggregate the stored normalized components under new weights."""
        return RiskMap(
            self.spec,
            self.occupied,
            aggregate(self.normalized, weights, self.occupied),
            raw=self.raw,
            normalized=self.normalized,
            omega=self.omega,
            weights=weights,
            meta=dict(self.meta),
        )


def aggregate(normalized: dict[str, np.ndarray], weights: RiskWeights, occupied: np.ndarray) -> np.ndarray:
    total = np.zeros(occupied.shape)
    for name, w in zip(COMPONENTS, weights.as_tuple()):
        total = total + w * normalized[name]
    return np.where(occupied, np.inf, total)


def raw_components(
    spec: GridSpec,
    densities: DensityField,
    uav: UavModel,
    shelter: ShelterModel,
    height_params: tuple[float, float],
    vehicle_fatality_rate: float = VEHICLE_ACCIDENT_FATALITY_RATE,
) -> dict[str, np.ndarray]:
    mu, sd = height_params
    fat = np.empty(spec.shape)
    prop = np.empty(spec.shape)
    noise = np.empty(spec.shape)
    veh = vehicle_risk(uav, densities.traffic, vehicle_fatality_rate)
    for z in range(spec.nz):
        h = layer_altitude(spec, z)
        fat[:, :, z] = people_risk(uav, densities.population, h, shelter) + veh
        prop[:, :, z] = property_risk(h, mu, sd)
        noise[:, :, z] = noise_risk(h)
    return {"fatality": fat, "property": prop, "noise": noise}


def build_risk_map(
    scenario: "UrbanScenario",
    spec: GridSpec | None = None,
    uav: UavModel = UavModel(),
    weights: RiskWeights = RiskWeights(),
    vehicle_fatality_rate: float = VEHICLE_ACCIDENT_FATALITY_RATE,
) -> RiskMap:
    """Evaluate every component per cell, normalize, and aggregate with ``weights``.

    A component that is zero everywhere is left as an all-zero field with
    omega = 0 instead of failing the whole map.
    """
    spec = spec or scenario.grid
    if spec != scenario.grid:
        raise DimensionMismatch("scenario grid does not match requested grid")
    occ = mark_obstacles(spec, scenario.building_heights).occupied
    dens = estimate_densities(scenario, spec)
    mu_sd = fit_height_distribution(scenario.building_heights)
    raw = raw_components(spec, dens, uav, scenario.shelter, mu_sd, vehicle_fatality_rate)

    free = ~occ
    normalized, omega, zeroed = {}, {}, []
    for name in COMPONENTS:
        try:
            n, o = normalize_components({name: raw[name]}, free)
            normalized[name], omega[name] = n[name], o[name]
        except ZeroMaximum:
            normalized[name], omega[name] = np.zeros(spec.shape), 0.0
            zeroed.append(name)
    total = aggregate(normalized, weights, occ)
    meta = {
        "log_height_mean": mu_sd[0],
        "log_height_std": mu_sd[1],
        "zero_components": zeroed,
        "scenario": scenario.name,
    }
    return RiskMap(spec, occ, total, raw, normalized, omega, weights, meta)


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

MAP_SCHEMA_VERSION = 1
MAP_LAYOUT = "flat arrays, x fastest then y then z: value(x, y, z) = a[x + nx*(y + ny*z)]; null marks +inf"


def _flat(arr: np.ndarray) -> list:
    return [None if not math.isfinite(v) else float(v) for v in np.asarray(arr, float).ravel(order="F")]


def _unflat(values, spec: GridSpec, name: str) -> np.ndarray:
    if len(values) != spec.n_cells:
        raise DimensionMismatch(f"'{name}' has {len(values)} values, expected {spec.n_cells}")
    arr = np.array([math.inf if v is None else v for v in values], dtype=float)
    return arr.reshape(spec.shape, order="F")


def risk_map_to_dict(m: RiskMap) -> dict:
    return {
        "version": MAP_SCHEMA_VERSION,
        "layout": MAP_LAYOUT,
        "grid": m.spec.to_dict(),
        "weights": list(m.weights.as_tuple()) if m.weights is not None else None,
        "omega": {k: float(v) for k, v in m.omega.items()},
        "meta": m.meta,
        "occupied": [int(v) for v in m.occupied.ravel(order="F")],
        "total": _flat(m.total),
        "normalized": {k: _flat(v) for k, v in m.normalized.items()},
    }


def risk_map_from_dict(d: dict) -> RiskMap:
    from .errors import ParseError, SchemaVersionMismatch

    if d.get("version") != MAP_SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported risk map version {d.get('version')!r}", "version")
    try:
        spec = GridSpec.from_dict(d["grid"])
        occ = _unflat(d["occupied"], spec, "occupied").astype(bool)
        total = _unflat(d["total"], spec, "total")
        normalized = {k: _unflat(v, spec, k) for k, v in d.get("normalized", {}).items()}
        w = d.get("weights")
        weights = RiskWeights(*w) if w is not None else None
    except KeyError as exc:
        raise ParseError("missing entry", exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(str(exc)) from None
    return RiskMap(spec, occ, total, {}, normalized, dict(d.get("omega", {})), weights, dict(d.get("meta", {})))


def layer_csv(m: RiskMap, z: int) -> str:
    """Cells of layer ``z`` as CSV rows x,y,z,fatality,property,noise,total (0-based, normalized components)."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", *COMPONENTS, "total"])
    for y in range(m.spec.ny):
        for x in range(m.spec.nx):
            comps = [repr(float(m.normalized[c][x, y, z])) if c in m.normalized else "" for c in COMPONENTS]
            t = m.total[x, y, z]
            w.writerow([x, y, z, *comps, repr(float(t)) if math.isfinite(t) else "inf"])
    return buf.getvalue()
