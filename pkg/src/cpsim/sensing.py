"""Perception simulation: onboard lidar raycasting with occlusion, overhead
aisle sensors, and the costmap-update policies for standalone (SP) vs
collaborative (CP) perception.

Raycast geometry notes. Rays start at the sensor pose and visit cells by
grid line traversal. Every boundary-crossing parameter is computed as a
fresh division (k * res - p) / u rather than by accumulating step deltas,
so the traversal is decided by exactly the same floating-point quantities
a per-cell segment-intersection test computes; an exact corner hit
(t_x == t_y) steps diagonally, matching open-interval cell interiors. A
ray that enters a rack or obstacle cell stops there and the blocking cell
itself counts as visible; entry exactly at the range limit does not count.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costmap import Costmap, InflationParams, inflate, mark_lethal
from .world import AisleRegion, RobotState, WorldModel

Cell = tuple[int, int]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SensorConfig:
    range: float = 5.0
    angular_resolution: float = math.radians(0.5)
    fov: float = TWO_PI

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("sensor range must be >= 0")
        if not 0 < self.angular_resolution <= self.fov:
            raise ValueError("need 0 < angular_resolution <= fov")
        if self.fov > TWO_PI + 1e-9:
            raise ValueError("fov cannot exceed a full circle")


@dataclass(frozen=True)
class PerceptionUpdate:
    source: tuple[str, int]  # ("onboard", robot_id) or ("overhead", aisle_id)
    detected_cells: frozenset[Cell]
    time: float


def ray_angles(heading: float, sensor: SensorConfig) -> list[float]:
    """Ray directions at angular_resolution spacing.

    Full-circle fov: angles heading + k*step for k = 0.. (wrap endpoint
    excluded). Partial fov: fan centered on heading, starting at
    heading - fov/2, closing endpoint included only when fov is an exact
    multiple of the spacing.
    """
    step = sensor.angular_resolution
    if sensor.fov >= TWO_PI - 1e-12:
        n = int(math.floor((TWO_PI - 1e-12) / step)) + 1
        return [heading + k * step for k in range(n)]
    n = int(math.floor(sensor.fov / step + 1e-12)) + 1
    return [heading - sensor.fov / 2.0 + k * step for k in range(n)]


def ray_directions(heading: float, sensor: SensorConfig) -> np.ndarray:
    """(n, 2) unit vectors for the sensor's rays (cos/sin evaluated here,
    in one place, so every consumer sees identical direction floats)."""
    angles = ray_angles(heading, sensor)
    out = np.empty((len(angles), 2), dtype=np.float64)
    for i, a in enumerate(angles):
        out[i, 0] = math.cos(a)
        out[i, 1] = math.sin(a)
    return out


@njit(cache=True)
def _raycast_kernel(occ, width, height, px, py, res, range_m,
                    dirs, c0x, c0y, out, stamp):
    # `out` is a reusable per-world buffer; a cell is visible in this scan
    # iff out[idx] == stamp, which saves clearing the buffer between scans.
    out[c0y * width + c0x] = stamp
    if occ[c0y * width + c0x] == 1 or range_m <= 0.0:
        return
    for r in range(dirs.shape[0]):
        ux = dirs[r, 0]
        uy = dirs[r, 1]
        cx = c0x
        cy = c0y
        if ux > 0.0:
            stepx = 1
            kx = cx + 1
            tx = (kx * res - px) / ux
        elif ux < 0.0:
            stepx = -1
            kx = cx
            tx = (kx * res - px) / ux
        else:
            stepx = 0
            kx = 0
            tx = np.inf
        if uy > 0.0:
            stepy = 1
            ky = cy + 1
            ty = (ky * res - py) / uy
        elif uy < 0.0:
            stepy = -1
            ky = cy
            ty = (ky * res - py) / uy
        else:
            stepy = 0
            ky = 0
            ty = np.inf
        while True:
            if tx < ty:
                tmin = tx
            else:
                tmin = ty
            if tmin >= range_m:
                break
            if tx < ty:
                cx += stepx
                kx += stepx
                tx = (kx * res - px) / ux
            elif ty < tx:
                cy += stepy
                ky += stepy
                ty = (ky * res - py) / uy
            else:
                # Exact corner hit: the ray touches the two side cells only
                # at a point, so it steps diagonally.
                cx += stepx
                kx += stepx
                tx = (kx * res - px) / ux
                cy += stepy
                ky += stepy
                ty = (ky * res - py) / uy
            if cx < 0 or cx >= width or cy < 0 or cy >= height:
                break
            idx = cy * width + cx
            out[idx] = stamp
            if occ[idx] == 1:
                break


@functools.lru_cache(maxsize=64)
def _cached_directions(heading: float, sensor: SensorConfig) -> np.ndarray:
    dirs = ray_directions(heading, sensor)
    dirs.setflags(write=False)
    return dirs


def _occupancy_u8(world: WorldModel) -> np.ndarray:
    """Ground-truth occupancy as uint8, cached between obstacle spawns."""
    cached = getattr(world, "_occ_u8_cache", None)
    if cached is not None and cached[0] == len(world.obstacles):
        return cached[1]
    occ = np.ascontiguousarray(world.occupied_mask(), dtype=np.uint8)
    occ.setflags(write=False)
    world._occ_u8_cache = (len(world.obstacles), occ)
    return occ


def _raycast_stamp(world: WorldModel, pose: tuple[float, float],
                   dirs: np.ndarray, range_m: float):
    """Run the traversal into the world's reusable scan buffer; returns
    (buffer, stamp). A cell was reached iff buffer[y * width + x] == stamp."""
    cell = world.cell_of(pose)
    if not world.in_bounds(cell):
        raise ValueError(f"sensor pose {pose} outside the grid")
    occ = _occupancy_u8(world)
    buf = getattr(world, "_scan_buf", None)
    if buf is None or buf.size != world.width * world.height:
        buf = np.zeros(world.width * world.height, dtype=np.int64)
        world._scan_buf = buf
        world._scan_stamp = 0
    world._scan_stamp += 1
    stamp = world._scan_stamp
    _raycast_kernel(occ.reshape(-1), world.width, world.height,
                    np.float64(pose[0]), np.float64(pose[1]),
                    np.float64(world.resolution), np.float64(range_m),
                    np.ascontiguousarray(dirs, dtype=np.float64),
                    np.int64(cell[0]), np.int64(cell[1]), buf,
                    np.int64(stamp))
    return buf, stamp


def raycast_with_directions(world: WorldModel, pose: tuple[float, float],
                            dirs: np.ndarray, range_m: float) -> set[Cell]:
    """Visible cells for explicit ray direction vectors (n, 2)."""
    buf, stamp = _raycast_stamp(world, pose, dirs, range_m)
    ys, xs = np.nonzero(buf.reshape(world.height, world.width) == stamp)
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def raycast_visible_cells(world: WorldModel, pose: tuple[float, float],
                          sensor: SensorConfig, heading: float = 0.0) -> set[Cell]:
    """Cells visible from pose: the sensor's own cell, plus every cell some
    ray reaches before blocking at a rack/obstacle (blocker included) or
    the range limit."""
    if sensor.range <= 0.0:
        cell = world.cell_of(pose)
        if not world.in_bounds(cell):
            raise ValueError(f"sensor pose {pose} outside the grid")
        return {cell}
    dirs = ray_directions(heading, sensor)
    return raycast_with_directions(world, pose, dirs, sensor.range)


def onboard_scan(world: WorldModel, robot: RobotState) -> PerceptionUpdate:
    """Obstacle cells the robot's own lidar can see right now. Racks block
    rays but are never reported (they live in the static layer).

    A full-circle sensor scans with heading 0 regardless of the robot's
    orientation (the fan is rotation-invariant), which keeps the ray
    directions cacheable."""
    sensor = robot.sensor if robot.sensor is not None else SensorConfig()
    obstacles = world.obstacle_cells()
    if sensor.range <= 0.0:
        detected = {world.cell_of(robot.pose)} & obstacles
    else:
        heading = 0.0 if sensor.fov >= TWO_PI - 1e-12 else robot.heading
        dirs = _cached_directions(heading, sensor)
        # Probe only obstacle cells against the scan buffer instead of
        # materializing the (much larger) full visible set.
        buf, stamp = _raycast_stamp(world, robot.pose, dirs, sensor.range)
        width = world.width
        detected = {c for c in obstacles if buf[c[1] * width + c[0]] == stamp}
    return PerceptionUpdate(("onboard", robot.id), frozenset(detected),
                            world.clock)


def overhead_scan(world: WorldModel, aisle: AisleRegion) -> PerceptionUpdate:
    """Occlusion-free view of one aisle: every obstacle cell inside its rect.

    The detected set is cached per (aisle, obstacle count) and the cached
    frozenset object is reused, so identical consecutive scans are cheap
    for the caller to deduplicate."""
    if not aisle.overhead_sensor:
        raise ValueError(f"aisle {aisle.id} has no overhead sensor")
    cache = getattr(world, "_overhead_cache", None)
    if cache is None:
        cache = world._overhead_cache = {}
    key = (aisle.id, len(world.obstacles))
    detected = cache.get(key)
    if detected is None:
        detected = frozenset(
            c for c in world.obstacle_cells() if aisle.contains(c))
        cache[key] = detected
    return PerceptionUpdate(("overhead", aisle.id), detected, world.clock)


def apply_update_sp(robot_costmap: Costmap, update: PerceptionUpdate,
                    params: InflationParams) -> Costmap:
    """SP policy: stamp the robot's own detections and re-inflate.

    Because lethal sources only ever accumulate, re-inflating the already
    inflated map equals inflating the raw static layer with the full known
    set; no-op updates return the map unchanged.
    """
    if update.source[0] != "onboard":
        raise ValueError("SP costmaps accept onboard updates only")
    return _stamp_and_inflate(robot_costmap, update.detected_cells, params)


def apply_update_cp(server_costmap: Costmap, updates, params: InflationParams) -> Costmap:
    """CP policy: fuse detections from all sources into the shared map and
    re-inflate once."""
    cells: set[Cell] = set()
    for update in updates:
        cells |= update.detected_cells
    return _stamp_and_inflate(server_costmap, cells, params)


def _stamp_and_inflate(cmap: Costmap, cells, params: InflationParams) -> Costmap:
    fresh = [c for c in sorted(cells) if cmap.cost_at(c) != 254]
    if not fresh:
        return cmap
    return inflate(mark_lethal(cmap, fresh), params)


class CentralServer:
    """Collects perception updates and serves the fused known-obstacle set.

    A detection submitted at time t becomes visible to robots at
    t + share_latency (default 0: same tick).
    """

    def __init__(self, share_latency: float = 0.0):
        if share_latency < 0:
            raise ValueError("share_latency must be >= 0")
        self.share_latency = share_latency
        self._log: list[tuple[float, frozenset[Cell]]] = []
        self._seen: set[Cell] = set()
        self._last_by_source: dict = {}
        self._cache: tuple | None = None  # (log_len, time, result)

    def submit(self, update: PerceptionUpdate) -> None:
        # Overhead scans reuse one frozenset object while nothing changes;
        # an identity hit means this exact payload was already processed.
        if self._last_by_source.get(update.source) is update.detected_cells:
            return
        self._last_by_source[update.source] = update.detected_cells
        novel = update.detected_cells - self._seen
        if novel:
            # Only growth events are logged; resubmitting known cells is
            # free, so per-tick scans don't bloat the log.
            self._log.append((update.time, frozenset(novel)))
            self._seen |= novel

    def known_cells_at(self, time: float) -> frozenset[Cell]:
        """Fused set of cells whose submissions have propagated by `time`.

        Returns the identical object for repeated queries while the answer
        cannot have changed (no new log entries, no pending entry maturing),
        so callers may use identity as a cheap no-change test."""
        cached = self._cache
        if cached is not None:
            log_len, cached_time, ready_all, next_ready, result = cached
            if log_len == len(self._log) and cached_time <= time and \
                    (ready_all or time < next_ready):
                return result
        out: set[Cell] = set()
        next_ready = math.inf
        for t, cells in self._log:
            ready_at = t + self.share_latency
            if ready_at <= time:
                out |= cells
            elif ready_at < next_ready:
                next_ready = ready_at
        result = frozenset(out)
        self._cache = (len(self._log), time, math.isinf(next_ready),
                       next_ready, result)
        return result
