"""Uniform voxel discretization of a bounded urban airspace.

Cells are addressed by 0-based ``(x, y, z)`` indices. Arrays over the grid
are shaped ``(nx, ny, nz)`` and indexed ``[x, y, z]``; the flat index used by
the search kernels is the C-order ravel, ``(x * ny + y) * nz + z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonDivisibleExtent,
    NonPositiveDimension,
    OutOfBounds,
    ValidationError,
)

# Fixed enumeration order of the 26 moves: dx, then dy, then dz, offsets ascending.
MOVES: tuple[tuple[int, int, int], ...] = tuple(
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
)


class CellIndex(NamedTuple):
    x: int
    y: int
    z: int

    def one_based(self) -> tuple[int, int, int]:
        return (self.x + 1, self.y + 1, self.z + 1)

    @classmethod
    def from_one_based(cls, xyz: Sequence[int]) -> "CellIndex":
        x, y, z = (int(v) for v in xyz)
        return cls(x - 1, y - 1, z - 1)


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nz: int
    unit_x: float = 100.0
    unit_y: float = 100.0
    unit_z: float = 30.0
    ground_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise NonPositiveDimension(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        for name in ("unit_x", "unit_y", "unit_z"):
            v = float(getattr(self, name))
            if not v > 0 or not math.isfinite(v):
                raise NonPositiveDimension(f"{name} must be > 0, got {v!r}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "ground_origin", tuple(float(v) for v in self.ground_origin))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def units(self) -> tuple[float, float, float]:
        return (self.unit_x, self.unit_y, self.unit_z)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    def contains(self, c: Sequence[int]) -> bool:
        x, y, z = c
        return 0 <= x < self.nx and 0 <= y < self.ny and 0 <= z < self.nz

    def check(self, c: Sequence[int]) -> CellIndex:
        """Return ``c`` as a :class:`CellIndex`, raising OutOfBounds if invalid."""
        if len(c) != 3 or not self.contains(c):
            raise OutOfBounds(f"cell {tuple(c)} outside grid {self.shape}")
        return CellIndex(int(c[0]), int(c[1]), int(c[2]))

    def flat(self, c: Sequence[int]) -> int:
        x, y, z = c
        return (x * self.ny + y) * self.nz + z

    def unflat(self, i: int) -> CellIndex:
        x, rem = divmod(int(i), self.ny * self.nz)
        y, z = divmod(rem, self.nz)
        return CellIndex(x, y, z)

    def cell_center(self, c: Sequence[int]) -> np.ndarray:
        """World coordinates (m) of the centroid of cell ``c``."""
        idx = np.asarray(c, dtype=float)
        return np.asarray(self.ground_origin) + (idx + 0.5) * np.asarray(self.units)

    def world_to_index(self, p: Sequence[float]) -> np.ndarray:
        """Continuous index coordinates of world point ``p`` (cell centroids are integers)."""
        return (np.asarray(p, float) - np.asarray(self.ground_origin)) / np.asarray(self.units) - 0.5

    def ground_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Centroid x/y coordinates (m) of every ground cell, each shaped (nx, ny)."""
        xs = self.ground_origin[0] + (np.arange(self.nx) + 0.5) * self.unit_x
        ys = self.ground_origin[1] + (np.arange(self.ny) + 0.5) * self.unit_y
        return np.meshgrid(xs, ys, indexing="ij")

    def segment_length(self, a: Sequence[int], b: Sequence[int]) -> float:
        return math.sqrt(
            ((b[0] - a[0]) * self.unit_x) ** 2
            + ((b[1] - a[1]) * self.unit_y) ** 2
            + ((b[2] - a[2]) * self.unit_z) ** 2
        )

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "unit_m": [self.unit_x, self.unit_y, self.unit_z],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        ux, uy, uz = d.get("unit_m", (100.0, 100.0, 30.0))
        origin = tuple(d.get("ground_origin", (0.0, 0.0, 0.0)))
        return cls(d["nx"], d["ny"], d["nz"], ux, uy, uz, origin)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    spec: GridSpec
    occupied: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.shape != self.spec.shape:
            raise DimensionMismatch(f"occupancy shape {occ.shape} != grid {self.spec.shape}")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)

    def __getitem__(self, c) -> bool:
        return bool(self.occupied[tuple(c)])

    def __eq__(self, other):
        return (
            isinstance(other, OccupancyGrid)
            and self.spec == other.spec
            and np.array_equal(self.occupied, other.occupied)
        )


def build_grid(extent_m: Sequence[float], unit_m: Sequence[float]) -> GridSpec:
    """Grid with ``extent / unit`` cells per axis; extents must be whole multiples."""
    if len(extent_m) != 3 or len(unit_m) != 3:
        raise DimensionMismatch("extent and unit must be 3-vectors")
    counts = []
    for axis, (e, u) in enumerate(zip(extent_m, unit_m)):
        e, u = float(e), float(u)
        if not (e > 0 and u > 0):
            raise NonPositiveDimension(f"axis {axis}: extent {e} and unit {u} must be > 0")
        n = round(e / u)
        if n < 1 or not math.isclose(n * u, e, rel_tol=1e-9, abs_tol=1e-9):
            raise NonDivisibleExtent(f"axis {axis}: extent {e} m is not a multiple of unit {u} m")
        counts.append(n)
    return GridSpec(counts[0], counts[1], counts[2], float(unit_m[0]), float(unit_m[1]), float(unit_m[2]))


def default_grid() -> GridSpec:
    """6 km x 6 km x 120 m in 100 m x 100 m x 30 m blocks (60 x 60 x 4)."""
    return build_grid((6000, 6000, 120), (100, 100, 30))


def neighbors(spec: GridSpec, c: Sequence[int]) -> list[CellIndex]:
    x, y, z = spec.check(c)
    out = []
    for dx, dy, dz in MOVES:
        n = (x + dx, y + dy, z + dz)
        if spec.contains(n):
            out.append(CellIndex(*n))
    return out


def layer_altitude(spec: GridSpec, z: int) -> float:
    """Representative altitude of layer ``z``: the top of the layer, (z+1)*unit_z."""
    if not 0 <= z < spec.nz:
        raise OutOfBounds(f"layer {z} outside 0..{spec.nz - 1}")
    return (z + 1) * spec.unit_z


def mark_obstacles(spec: GridSpec, building_heights) -> OccupancyGrid:
    """A cell is occupied when the building under it rises above the cell's floor."""
    h = np.asarray(building_heights, dtype=float)
    if h.shape != (spec.nx, spec.ny):
        raise DimensionMismatch(f"building heights shape {h.shape} != footprint {(spec.nx, spec.ny)}")
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise ValidationError("building heights must be finite and >= 0")
    floors = np.arange(spec.nz) * spec.unit_z
    return OccupancyGrid(spec, h[:, :, None] > floors[None, None, :])
