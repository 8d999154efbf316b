"""Mission execution: per-tick sense / update costmap / plan / drive loop
with blockage-triggered replanning and exact metric accounting.

Each tick the robot (1) applies perception for its mode, (2) replans if it
has no plan or a newly known obstacle blocks the remaining path, halting
motion for that tick, or (3) advances one cell along the plan. Reported
mission time is distance/speed plus modeled planning time (expansions *
t_per_expansion + overhead per planning event), never wall clock, so runs
are machine-independent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import Costmap, CostConstants, InflationParams, inflate, mark_lethal
from .planner import (
    DEFAULT_EDGE_PARAMS,
    DEFAULT_SCHEDULE,
    EdgeCostParams,
    EpsilonSchedule,
    Plan,
    ara_star,
)
from .sensing import CentralServer, onboard_scan, overhead_scan
from .world import (
    Mission,
    RobotState,
    WorldModel,
    advance,
    validate_mission,
)

log = logging.getLogger("cpsim.executive")

Cell = tuple[int, int]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TimingModel:
    """Deterministic stand-in for planner wall time."""

    t_per_expansion: float = 1e-5
    overhead: float = 0.0

    def __post_init__(self):
        if self.t_per_expansion < 0 or self.overhead < 0:
            raise ValueError("timing parameters must be >= 0")

    def planning_time(self, expansions: int) -> float:
        return expansions * self.t_per_expansion + self.overhead


@dataclass(frozen=True)
class MissionEvent:
    time: float
    kind: str  # planned, blocked, replanned, reached, infeasible, truncated, collided
    detail: str = ""


@dataclass(frozen=True)
class MissionResult:
    mode: str
    distance: float
    time: float
    replans: int
    reached: bool
    plans: tuple[Plan, ...]
    collided: bool = False
    truncated: bool = False
    events: tuple[MissionEvent, ...] = ()
    trajectory: tuple[Cell, ...] = ()  # cells actually visited, start first


def check_path_blocked(remaining_waypoints, costmap: Costmap) -> int | None:
    """Index of the first waypoint whose cell cost is INSCRIBED or worse,
    or None when the whole remaining path is clear."""
    for i, cell in enumerate(remaining_waypoints):
        if costmap.cost_at(cell) >= CostConstants.INSCRIBED:
            return i
    return None


def _static_base(world: WorldModel) -> Costmap:
    """Uninflated costmap holding only the racks (what a robot knows at t=0)."""
    costs = np.where(world.rack_mask, CostConstants.LETHAL,
                     CostConstants.FREE).astype(np.uint8)
    return Costmap.empty(world.width, world.height,
                         world.resolution).with_costs(costs)


def run_mission(world: WorldModel, robot: RobotState, mission: Mission,
                mode: str, timing: TimingModel = TimingModel(),
                inflation: InflationParams = InflationParams(),
                edge_params: EdgeCostParams = DEFAULT_EDGE_PARAMS,
                schedule: EpsilonSchedule = DEFAULT_SCHEDULE,
                server: CentralServer | None = None,
                planner_budget: int | None = None,
                tick_limit: int | None = None) -> MissionResult:
    """Drive one robot from mission.start to mission.goal under SP or CP.

    The world is mutated (clock, robot pose). CP mode uses `server` for
    overhead-sensor sharing (a fresh zero-latency server when omitted).
    Terminates with reached=False on infeasibility under current
    knowledge, on collision, or at the tick limit (truncated=True).
    """
    if mode not in ("SP", "CP"):
        raise ValueError(f"unknown mode {mode!r}")
    validate_mission(world, mission)
    if tick_limit is None:
        tick_limit = 20 * (world.width + world.height)
    if mode == "CP" and server is None:
        server = CentralServer()

    robot.pose = world.center_of(mission.start)
    robot.mode = mode
    base = _static_base(world)
    known: set[Cell] = set()
    costmap = inflate(base, inflation)

    plans: list[Plan] = []
    events: list[MissionEvent] = []
    trajectory: list[Cell] = [mission.start]
    planning_total = 0.0
    distance = 0.0
    plan: Plan | None = None
    wp_index = 0
    reached = False
    truncated = True  # flipped off by any terminal event before the limit
    last_shared: frozenset | None = None

    overhead_aisles = sorted(
        (a for a in world.aisles if a.overhead_sensor), key=lambda a: a.id)

    for _ in range(tick_limit):
        # -- perception -----------------------------------------------------
        if mode == "CP":
            for aisle in overhead_aisles:
                server.submit(overhead_scan(world, aisle))
        update = onboard_scan(world, robot)
        fresh: set[Cell] = set(update.detected_cells)
        if mode == "CP":
            server.submit(update)  # robots share their own sightings too
            shared = server.known_cells_at(world.clock)
            if shared is not last_shared:  # server reuses the object while
                fresh |= shared            # the fused set is unchanged
                last_shared = shared
        map_changed = not fresh <= known
        if map_changed:
            known |= fresh
            costmap = inflate(mark_lethal(base, sorted(known)), inflation)
            log.debug("knowledge grew to %d cells at t=%.3f",
                      len(known), world.clock)

        cur = world.cell_of(robot.pose)
        if cur == mission.goal:
            reached = True
            truncated = False
            events.append(MissionEvent(world.clock, "reached"))
            break

        # -- plan validity ---------------------------------------------------
        # Costs only grow with knowledge, so an unchanged map cannot newly
        # block a previously valid plan; recheck only after growth.
        need_plan = plan is None
        if plan is not None and map_changed:
            ahead = plan.waypoints[wp_index + 1:]
            bi = check_path_blocked(ahead, costmap)
            if bi is not None:
                events.append(MissionEvent(
                    world.clock, "blocked",
                    f"waypoint {wp_index + 1 + bi} {ahead[bi]}"))
                log.info("path blocked at %s, t=%.3f", ahead[bi], world.clock)
                need_plan = True

        if need_plan:
            result = ara_star(costmap, cur, mission.goal, schedule,
                              planner_budget, edge_params,
                              allow_blocked_start=True)
            planning_total += timing.planning_time(result.expansions)
            if result.best is None:
                truncated = False
                events.append(MissionEvent(world.clock, "infeasible"))
                log.info("no path under current knowledge at t=%.3f",
                         world.clock)
                break
            plan = result.best
            wp_index = 0
            plans.append(plan)
            kind = "planned" if len(plans) == 1 else "replanned"
            events.append(MissionEvent(
                world.clock, kind,
                f"cost {plan.cost} bound {plan.epsilon_bound:g} "
                f"expansions {result.expansions}"))
            dt_plan = timing.planning_time(result.expansions)
            if dt_plan > 0:
                advance(world, dt_plan)  # robot halts while planning
            continue

        # -- drive one step ---------------------------------------------------
        nxt = plan.waypoints[wp_index + 1]
        step = world.resolution * (
            SQRT2 if nxt[0] != cur[0] and nxt[1] != cur[1] else 1.0)
        dx = (nxt[0] - cur[0]) * world.resolution
        dy = (nxt[1] - cur[1]) * world.resolution
        advance(world, step / robot.speed, {robot.id: (dx, dy)})
        distance += step
        wp_index += 1
        trajectory.append(nxt)
        if robot.collided:
            truncated = False
            events.append(MissionEvent(world.clock, "collided", f"{nxt}"))
            log.error("collision at %s, t=%.3f", nxt, world.clock)
            break
        if world.cell_of(robot.pose) == mission.goal:
            reached = True
            truncated = False
            events.append(MissionEvent(world.clock, "reached"))
            break
    else:
        events.append(MissionEvent(world.clock, "truncated"))
        log.error("tick limit %d hit before goal", tick_limit)

    return MissionResult(
        mode=mode,
        distance=distance,
        time=distance / robot.speed + planning_total,
        replans=max(0, len(plans) - 1),
        reached=reached,
        plans=tuple(plans),
        collided=robot.collided,
        truncated=truncated and not reached,
        events=tuple(events),
        trajectory=tuple(trajectory),
    )
