"""Layered 2D costmap: lethal marking, distance transform, inflation, fusion.

Cost convention (same as the usual navigation-stack grid):
    0       FREE
    1-252   inflation decay band
    253     INSCRIBED (guaranteed footprint collision)
    254     LETHAL (occupied cell)

Costmaps are immutable snapshots: every operation returns a new map and the
backing array is marked read-only, so snapshots can be handed across threads
or kept as audit records without defensive copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt


class CostmapError(Exception):
    pass


class CellOutOfBoundsError(CostmapError):
    """A cell index fell outside the grid."""


class IncompatibleGridError(CostmapError):
    """Grids with different shape, resolution, or origin cannot be fused."""


class CostConstants:
    LETHAL = 254
    INSCRIBED = 253
    MAX_NONLETHAL = 252
    FREE = 0


@dataclass(frozen=True)
class InflationParams:
    """Inflation zone geometry.

    inscribed_radius: cells closer than this to a lethal cell get cost 253.
    inflation_radius: outer edge of the decay band (>= inscribed_radius).
    cost_scaling_factor: exponential decay rate k in 1/m.
    """

    inscribed_radius: float = 0.3
    inflation_radius: float = 0.8
    cost_scaling_factor: float = 10.0

    def __post_init__(self):
        if self.inscribed_radius < 0:
            raise ValueError("inscribed_radius must be >= 0")
        if self.inflation_radius < self.inscribed_radius:
            raise ValueError("inflation_radius must be >= inscribed_radius")
        if self.cost_scaling_factor <= 0:
            raise ValueError("cost_scaling_factor must be > 0")


@dataclass(frozen=True)
class Costmap:
    """2D grid of traversal costs.

    costs has shape (height, width), dtype uint8, and is read-only; cell
    (x, y) lives at costs[y, x] (row-major flat index y * width + x).
    """

    width: int
    height: int
    resolution: float
    origin: tuple[float, float]
    costs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.costs.shape != (self.height, self.width):
            raise ValueError(
                f"costs shape {self.costs.shape} != (height, width) "
                f"({self.height}, {self.width})"
            )
        if self.costs.dtype != np.uint8:
            raise ValueError("costs must be uint8")
        if self.costs.size and self.costs.max() > CostConstants.LETHAL:
            raise ValueError("cost values must be <= 254")
        costs = self.costs
        if costs.flags.writeable:
            # Snapshot so later mutation of the source array cannot leak in.
            costs = costs.copy()
            costs.setflags(write=False)
            object.__setattr__(self, "costs", costs)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float,
              origin: tuple[float, float] = (0.0, 0.0)) -> Costmap:
        return cls(width, height, resolution, origin,
                   np.zeros((height, width), dtype=np.uint8))

    def with_costs(self, costs: np.ndarray) -> Costmap:
        """New snapshot sharing this map's geometry."""
        return Costmap(self.width, self.height, self.resolution, self.origin,
                       np.ascontiguousarray(costs, dtype=np.uint8))

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def cost_at(self, cell: tuple[int, int]) -> int:
        x, y = cell
        if not self.in_bounds(cell):
            raise CellOutOfBoundsError(f"cell {cell!r} outside {self.width}x{self.height} grid")
        return int(self.costs[y, x])

    def lethal_mask(self) -> np.ndarray:
        return self.costs == CostConstants.LETHAL

    def same_grid(self, other: Costmap) -> bool:
        return (self.width == other.width and self.height == other.height
                and self.resolution == other.resolution
                and self.origin == other.origin)


def mark_lethal(cmap: Costmap, cells) -> Costmap:
    """Return a copy of cmap with the given (x, y) cells set to LETHAL.

    Raises CellOutOfBoundsError naming the first offending cell.
    Marking no cells, or already-lethal cells, is a no-op.
    """
    cells = list(cells)
    for cell in cells:
        if not cmap.in_bounds(cell):
            raise CellOutOfBoundsError(
                f"cell {tuple(cell)!r} outside {cmap.width}x{cmap.height} grid")
    if not cells:
        return cmap
    costs = cmap.costs.copy()
    for x, y in cells:
        costs[y, x] = CostConstants.LETHAL
    return cmap.with_costs(costs)


def _squared_cell_distances(cmap: Costmap) -> np.ndarray | None:
    """Integer squared cell distance to the nearest lethal cell, or None
    when the map has no lethal cells.

    The EDT result is a correctly rounded sqrt of an integer, so squaring
    and rounding recovers the integer exactly for any realistic grid size.
    """
    lethal = cmap.lethal_mask()
    if not lethal.any():
        return None
    edt = distance_transform_edt(~lethal)
    return np.rint(edt * edt).astype(np.int64)


def distance_transform(cmap: Costmap) -> np.ndarray:
    """Euclidean distance (meters) from each cell center to the nearest
    lethal cell center; 0 at lethal cells, +inf when no lethal cells exist.
    """
    d2 = _squared_cell_distances(cmap)
    if d2 is None:
        return np.full((cmap.height, cmap.width), np.inf)
    return np.sqrt(d2.astype(np.float64)) * cmap.resolution


def inflate(cmap: Costmap, params: InflationParams) -> Costmap:
    """Propagate cost outward from lethal cells.

    Per cell with distance d to the nearest lethal cell:
        d == 0                       -> LETHAL
        0 < d <= inscribed_radius    -> INSCRIBED
        inscribed < d <= inflation   -> floor(252 * exp(-k * (d - inscribed))),
                                        never below the pre-inflation cost
        d > inflation_radius         -> pre-inflation cost

    Inflation is always computed fresh from the supplied (un-inflated)
    layer, so identical lethal sets always produce identical output.
    """
    d2 = _squared_cell_distances(cmap)
    if d2 is None:
        return cmap
    dist = np.sqrt(d2.astype(np.float64)) * cmap.resolution

    out = cmap.costs.astype(np.int64)
    inscribed_band = (dist > 0) & (dist <= params.inscribed_radius)
    out[inscribed_band] = CostConstants.INSCRIBED

    decay_band = (dist > params.inscribed_radius) & (dist <= params.inflation_radius)
    if decay_band.any():
        # One exp per distinct squared distance keeps the math scalar and
        # exactly reproducible, and is far cheaper than a per-cell exp.
        d2_band = d2[decay_band]
        uniq, inverse = np.unique(d2_band, return_inverse=True)
        table = np.empty(uniq.shape[0], dtype=np.int64)
        k = params.cost_scaling_factor
        for i, q in enumerate(uniq):
            d = math.sqrt(q) * cmap.resolution
            table[i] = math.floor(
                CostConstants.MAX_NONLETHAL * math.exp(-k * (d - params.inscribed_radius)))
        out[decay_band] = np.maximum(table[inverse], out[decay_band])

    out[dist == 0.0] = CostConstants.LETHAL
    return cmap.with_costs(out.astype(np.uint8))


def fuse(maps: list[Costmap]) -> Costmap:
    """Cell-wise maximum of the input maps (commutative, associative,
    idempotent), e.g. merging perception sources on a central server.

    All maps must share width/height/resolution/origin.
    """
    if not maps:
        raise ValueError("fuse requires at least one costmap")
    first = maps[0]
    for m in maps[1:]:
        if not first.same_grid(m):
            raise IncompatibleGridError(
                f"grid mismatch: {first.width}x{first.height}@{first.resolution} "
                f"origin {first.origin} vs {m.width}x{m.height}@{m.resolution} "
                f"origin {m.origin}")
    if len(maps) == 1:
        return first
    merged = np.maximum.reduce([m.costs for m in maps])
    return first.with_costs(merged)
