"""Ground-truth warehouse model: static racks, aisle regions, spawned
obstacles, robot poses, and a deterministic simulation clock.

The ASCII map format is one character per cell, rows top to bottom
(first line is y=0): '.' free, '#' rack. Cell (x, y) covers the square
[x*res, (x+1)*res) x [y*res, (y+1)*res); poses are continuous meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .costmap import Costmap, mark_lethal

if TYPE_CHECKING:
    from .sensing import SensorConfig

Cell = tuple[int, int]

FREE_CHAR = "."
RACK_CHAR = "#"


class WorldError(Exception):
    pass


class MapParseError(WorldError):
    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        if line is not None:
            message = f"line {line}" + (
                f", column {column}" if column is not None else "") + f": {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class PlacementError(WorldError):
    """Obstacle footprint overlaps racks, robots, or another obstacle."""


@dataclass(frozen=True)
class AisleRegion:
    id: int
    rect: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    overhead_sensor: bool = True

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if x0 > x1 or y0 > y1:
            raise ValueError(f"aisle {self.id}: malformed rect {self.rect}")

    def cells(self):
        x0, y0, x1, y1 = self.rect
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                yield (x, y)

    def contains(self, cell: Cell) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= cell[0] <= x1 and y0 <= cell[1] <= y1


@dataclass(frozen=True)
class Obstacle:
    id: int
    cells: frozenset[Cell]
    spawn_time: float


@dataclass
class RobotState:
    id: int
    pose: tuple[float, float]  # meters
    heading: float = 0.0
    speed: float = 1.0
    sensor: "SensorConfig | None" = None
    mode: str = "SP"
    collided: bool = False

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("robot speed must be > 0")
        if self.mode not in ("SP", "CP"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class Mission:
    start: Cell
    goal: Cell

    def __post_init__(self):
        if self.start == self.goal:
            raise ValueError("mission start and goal must be distinct")


@dataclass
class WorldModel:
    width: int
    height: int
    resolution: float
    rack_mask: np.ndarray  # (height, width) bool, read-only
    aisles: list[AisleRegion] = field(default_factory=list)
    obstacles: list[Obstacle] = field(default_factory=list)
    robots: list[RobotState] = field(default_factory=list)
    clock: float = 0.0

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def cell_of(self, pose: tuple[float, float]) -> Cell:
        return (int(math.floor(pose[0] / self.resolution)),
                int(math.floor(pose[1] / self.resolution)))

    def center_of(self, cell: Cell) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.resolution,
                (cell[1] + 0.5) * self.resolution)

    def is_rack(self, cell: Cell) -> bool:
        return bool(self.rack_mask[cell[1], cell[0]])

    def obstacle_cells(self) -> frozenset[Cell]:
        # Cached between spawns; obstacles never move within a trial.
        cached = getattr(self, "_obcells_cache", None)
        if cached is not None and cached[0] == len(self.obstacles):
            return cached[1]
        out: set[Cell] = set()
        for ob in self.obstacles:
            out |= ob.cells
        frozen = frozenset(out)
        self._obcells_cache = (len(self.obstacles), frozen)
        return frozen

    def occupied_mask(self) -> np.ndarray:
        """Ground-truth occupancy: racks plus spawned obstacles (read-only;
        cached between obstacle spawns, since obstacles never move)."""
        cached = getattr(self, "_occ_cache", None)
        if cached is not None and cached[0] == len(self.obstacles):
            return cached[1]
        occ = self.rack_mask.copy()
        for ob in self.obstacles:
            for x, y in ob.cells:
                occ[y, x] = True
        occ.setflags(write=False)
        self._occ_cache = (len(self.obstacles), occ)
        return occ

    def is_occupied(self, cell: Cell) -> bool:
        if self.rack_mask[cell[1], cell[0]]:
            return True
        return any(cell in ob.cells for ob in self.obstacles)


def load_world(map_text: str, config) -> WorldModel:
    """Parse an ASCII map plus aisle declarations into a WorldModel.

    `config` provides `resolution` (meters per cell) and `aisles`
    (AisleRegion sequence). Raises MapParseError (with 1-based line and
    column) for ragged lines or unknown characters, and WorldError when
    an aisle rect leaves the grid, covers a rack cell, or reuses an id.
    """
    lines = map_text.splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MapParseError("map is empty")
    width = len(lines[0])
    if width == 0:
        raise MapParseError("map rows are empty", line=1, column=1)
    rows = []
    for i, line in enumerate(lines):
        if len(line) != width:
            raise MapParseError(
                f"ragged row: length {len(line)}, expected {width}",
                line=i + 1, column=min(len(line), width) + 1)
        row = []
        for j, ch in enumerate(line):
            if ch == FREE_CHAR:
                row.append(False)
            elif ch == RACK_CHAR:
                row.append(True)
            else:
                raise MapParseError(f"unknown map character {ch!r}",
                                    line=i + 1, column=j + 1)
        rows.append(row)
    rack_mask = np.array(rows, dtype=bool)
    rack_mask.setflags(write=False)
    height = rack_mask.shape[0]

    aisles = list(getattr(config, "aisles", ()) or ())
    seen_ids = set()
    for aisle in aisles:
        if aisle.id in seen_ids:
            raise WorldError(f"duplicate aisle id {aisle.id}")
        seen_ids.add(aisle.id)
        x0, y0, x1, y1 = aisle.rect
        if x0 < 0 or y0 < 0 or x1 >= width or y1 >= height:
            raise WorldError(
                f"aisle {aisle.id} rect {aisle.rect} leaves the "
                f"{width}x{height} grid")
        sub = rack_mask[y0:y1 + 1, x0:x1 + 1]
        if sub.any():
            ys, xs = np.nonzero(sub)
            raise WorldError(
                f"aisle {aisle.id} covers rack cell "
                f"({x0 + int(xs[0])}, {y0 + int(ys[0])})")

    return WorldModel(width=width, height=height,
                      resolution=float(config.resolution),
                      rack_mask=rack_mask, aisles=aisles)


def validate_mission(world: WorldModel, mission: Mission) -> None:
    for name, cell in (("start", mission.start), ("goal", mission.goal)):
        if not world.in_bounds(cell):
            raise WorldError(f"mission {name} {cell} out of bounds")
        if world.is_rack(cell):
            raise WorldError(f"mission {name} {cell} is a rack cell")


def spawn_obstacle(world: WorldModel, footprint_cells, time: float) -> WorldModel:
    """Append an obstacle with the given footprint at spawn_time = time.

    The footprint must be nonempty, in bounds, and free of racks, robots,
    and existing obstacles.
    """
    cells = frozenset((int(x), int(y)) for x, y in footprint_cells)
    if not cells:
        raise PlacementError("obstacle footprint is empty")
    for cell in sorted(cells):
        if not world.in_bounds(cell):
            raise PlacementError(f"footprint cell {cell} out of bounds")
        if world.is_rack(cell):
            raise PlacementError(f"footprint cell {cell} overlaps a rack")
    existing = world.obstacle_cells()
    overlap = cells & existing
    if overlap:
        raise PlacementError(
            f"footprint overlaps existing obstacle at {min(overlap)}")
    for robot in world.robots:
        if world.cell_of(robot.pose) in cells:
            raise PlacementError(f"footprint overlaps robot {robot.id}")
    world.obstacles.append(Obstacle(len(world.obstacles), cells, float(time)))
    return world


def advance(world: WorldModel, dt: float, robot_motion=None) -> WorldModel:
    """Step the clock by dt and apply per-robot displacements (meters).

    robot_motion maps robot id -> (dx, dy); omitted robots stay put.
    A robot whose new cell is ground-truth occupied gets its `collided`
    flag set (the trial records it; no exception). Displacements beyond
    speed * dt (plus float slack) are rejected.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    motion = robot_motion or {}
    for robot in world.robots:
        if robot.id not in motion:
            continue
        dx, dy = motion[robot.id]
        step = math.hypot(dx, dy)
        if step > robot.speed * dt + 1e-9:
            raise ValueError(
                f"robot {robot.id} displacement {step:.6f} exceeds "
                f"speed*dt = {robot.speed * dt:.6f}")
        if step > 0:
            robot.heading = math.atan2(dy, dx)
        robot.pose = (robot.pose[0] + dx, robot.pose[1] + dy)
        cell = world.cell_of(robot.pose)
        if not world.in_bounds(cell) or world.is_occupied(cell):
            robot.collided = True
    world.clock += dt
    return world


def ground_truth_costmap(world: WorldModel) -> Costmap:
    """Un-inflated costmap with every rack and obstacle cell lethal."""
    base = Costmap.empty(world.width, world.height, world.resolution)
    cells = [(int(x), int(y)) for y, x in zip(*np.nonzero(world.occupied_mask()))]
    return mark_lethal(base, cells)
