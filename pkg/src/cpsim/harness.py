"""Seeded trial generation and paired SP/CP experiment runs.

Reproducibility contract: trial streams come from the counter-based
Philox engine (numpy's Philox4x64-10) keyed per trial as

    trial_seed = (root_seed XOR ((trial_id + 1) * 0x9E3779B97F4A7C15)) mod 2**64

so any implementation with a Philox generator can regenerate a single
trial without replaying the ones before it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import Config
from .costmap import CostConstants, inflate, mark_lethal
from .executive import MissionResult, run_mission
from .planner import BlockedEndpointError, dijkstra_oracle
from .sensing import CentralServer
from .world import (
    Mission,
    RobotState,
    WorldModel,
    ground_truth_costmap,
    load_world,
    spawn_obstacle,
)

log = logging.getLogger("cpsim.harness")

Cell = tuple[int, int]

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
MAX_REJECTIONS = 1000


class TrialGenerationError(Exception):
    """Map too constrained: rejection sampling failed to converge."""


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    seed: int
    mission: Mission
    obstacle_footprints: tuple  # tuple of tuples of cells


@dataclass(frozen=True)
class TrialResult:
    spec: TrialSpec
    oracle_dist_m: float
    by_mode: dict  # mode -> MissionResult

    def row(self) -> dict:
        sp = self.by_mode.get("SP")
        cp = self.by_mode.get("CP")
        m = self.spec.mission
        return {
            "trial_id": self.spec.trial_id,
            "seed": self.spec.seed,
            "start_x": m.start[0], "start_y": m.start[1],
            "goal_x": m.goal[0], "goal_y": m.goal[1],
            "oracle_dist_m": self.oracle_dist_m,
            "dist_sp_m": sp.distance if sp else math.nan,
            "dist_cp_m": cp.distance if cp else math.nan,
            "time_sp_s": sp.time if sp else math.nan,
            "time_cp_s": cp.time if cp else math.nan,
            "replans_sp": sp.replans if sp else -1,
            "replans_cp": cp.replans if cp else -1,
            "reached_sp": int(sp.reached) if sp else 0,
            "reached_cp": int(cp.reached) if cp else 0,
        }


def trial_seed(root_seed: int, trial_id: int) -> int:
    return (root_seed ^ ((trial_id + 1) * _GOLDEN)) & _MASK64


def trial_rng(root_seed: int, trial_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=trial_seed(root_seed,
                                                               trial_id)))


def path_length_m(waypoints, resolution: float) -> float:
    total = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        diag = a[0] != b[0] and a[1] != b[1]
        total += resolution * (math.sqrt(2.0) if diag else 1.0)
    return total


def _footprint_cells(config: Config, rng) -> tuple:
    """Axis-aligned rectangle in cells; orientation is a coin flip."""
    w = max(1, round(config.experiment.obstacle_width / config.resolution))
    h = max(1, round(config.experiment.obstacle_height / config.resolution))
    if rng.integers(2) == 1:
        w, h = h, w
    return w, h


def generate_trial(rng, world: WorldModel, config: Config,
                   trial_id: int = 0, seed: int = 0) -> TrialSpec:
    """Rejection-sample start, goal, then obstacle footprints uniformly
    over valid placements; resample the whole trial when the mission is
    infeasible with every obstacle marked."""
    free = np.flatnonzero(~world.rack_mask.ravel())
    if free.size < 2:
        raise TrialGenerationError("map has fewer than two free cells")
    width = world.width

    def draw_cell():
        flat = int(free[rng.integers(free.size)])
        return flat % width, flat // width

    inflated_static = inflate(ground_truth_costmap(world), config.inflation)
    rejections = 0
    while True:
        if rejections >= MAX_REJECTIONS:
            raise TrialGenerationError(
                f"gave up after {MAX_REJECTIONS} rejections; "
                "map too constrained for the requested obstacles")

        start = draw_cell()
        goal = draw_cell()
        if start == goal or \
                inflated_static.cost_at(start) >= CostConstants.INSCRIBED or \
                inflated_static.cost_at(goal) >= CostConstants.INSCRIBED:
            rejections += 1
            continue

        taken = {start, goal}
        footprints = []
        ok = True
        for _ in range(config.experiment.obstacles_per_trial):
            w, h = _footprint_cells(config, rng)
            if w > world.width or h > world.height:
                raise TrialGenerationError("obstacle larger than the map")
            # Anchor on a free cell: still uniform over valid placements
            # (every valid rect has a free top-left corner), but far fewer
            # rejections on rack-dense maps than a whole-grid draw.
            x0, y0 = draw_cell()
            if x0 + w > world.width or y0 + h > world.height:
                ok = False
                break
            cells = [(x, y) for y in range(y0, y0 + h)
                     for x in range(x0, x0 + w)]
            if any(world.is_rack(c) or c in taken for c in cells):
                ok = False
                break
            taken.update(cells)
            footprints.append(tuple(cells))
        if not ok:
            rejections += 1
            continue

        # Full-knowledge feasibility: all obstacles marked and inflated.
        all_cells = [c for fp in footprints for c in fp]
        full = inflate(mark_lethal(ground_truth_costmap(world), all_cells),
                       config.inflation)
        if full.cost_at(start) >= CostConstants.INSCRIBED or \
                full.cost_at(goal) >= CostConstants.INSCRIBED:
            rejections += 1
            continue
        try:
            oracle = dijkstra_oracle(full, start, goal,
                                     config.edge_params)
        except BlockedEndpointError:
            rejections += 1
            continue
        if oracle is None:
            rejections += 1
            continue

        return TrialSpec(trial_id=trial_id, seed=seed,
                         mission=Mission(start, goal),
                         obstacle_footprints=tuple(footprints))


def _base_world(config: Config) -> WorldModel:
    return load_world(config.map_text(), config)


def run_trial(config: Config, spec: TrialSpec,
              modes=("SP", "CP")) -> TrialResult:
    """Run one mission under each mode on identical fresh worlds."""
    results = {}
    oracle_dist = None
    for mode in modes:
        world = _base_world(config)
        for fp in spec.obstacle_footprints:
            spawn_obstacle(world, list(fp), 0.0)
        if oracle_dist is None:
            full = inflate(ground_truth_costmap(world), config.inflation)
            plan = dijkstra_oracle(full, spec.mission.start,
                                   spec.mission.goal, config.edge_params)
            if plan is None:
                raise TrialGenerationError(
                    f"trial {spec.trial_id} infeasible at run time")
            oracle_dist = path_length_m(plan.waypoints, config.resolution)
        robot = RobotState(0, world.center_of(spec.mission.start),
                           speed=config.robot_speed, sensor=config.sensor)
        world.robots.append(robot)
        server = CentralServer(config.share_latency)
        results[mode] = run_mission(
            world, robot, spec.mission, mode,
            timing=config.timing, inflation=config.inflation,
            edge_params=config.edge_params, schedule=config.schedule,
            server=server, planner_budget=config.planner_budget)
        log.info("trial %d %s: dist=%.2f time=%.2f replans=%d reached=%s",
                 spec.trial_id, mode, results[mode].distance,
                 results[mode].time, results[mode].replans,
                 results[mode].reached)
    return TrialResult(spec=spec, oracle_dist_m=oracle_dist,
                       by_mode=results)


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks on ties."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need two equal-length samples of size >= 2")

    def ranks(vals):
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        out = [0.0] * len(vals)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and \
                    vals[order[j + 1]] == vals[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                out[order[k]] = avg
            i = j + 1
        return out

    rx, ry = ranks(xs), ranks(ys)
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    if vx == 0.0 or vy == 0.0:
        return 0.0
    return cov / math.sqrt(vx * vy)


@dataclass(frozen=True)
class ExperimentSummary:
    rows: tuple          # per-trial dict rows, trial order
    means: dict          # metric -> {"sp": .., "cp": .., "delta": ..}
    correlation: float   # spearman(oracle_dist, dist_sp - dist_cp)
    collisions: int
    truncated: int

    @staticmethod
    def from_results(results) -> "ExperimentSummary":
        rows = tuple(r.row() for r in results)
        means = {}
        for metric, sp_key, cp_key in (
                ("distance_m", "dist_sp_m", "dist_cp_m"),
                ("time_s", "time_sp_s", "time_cp_s"),
                ("replans", "replans_sp", "replans_cp")):
            sp_mean = sum(r[sp_key] for r in rows) / len(rows)
            cp_mean = sum(r[cp_key] for r in rows) / len(rows)
            means[metric] = {"sp": sp_mean, "cp": cp_mean,
                             "delta": sp_mean - cp_mean}
        corr = spearman([r["oracle_dist_m"] for r in rows],
                        [r["dist_sp_m"] - r["dist_cp_m"] for r in rows]) \
            if len(rows) >= 2 else 0.0
        collisions = sum(res.collided for r in results
                         for res in r.by_mode.values())
        truncated = sum(res.truncated for r in results
                        for res in r.by_mode.values())
        return ExperimentSummary(rows=rows, means=means, correlation=corr,
                                 collisions=collisions, truncated=truncated)


def build_trial(config: Config, trial_id: int) -> TrialSpec:
    """Regenerate a single trial from the root seed (used by replay)."""
    world = _base_world(config)
    seed = trial_seed(config.experiment.seed, trial_id)
    rng = np.random.Generator(np.random.Philox(key=seed))
    return generate_trial(rng, world, config, trial_id=trial_id, seed=seed)


def demo_trial(config: Config) -> TrialSpec:
    """Hand-scripted showcase for the packaged three-aisle demo map: both
    nearer aisles are sealed by obstacles that sit inside overhead
    coverage but beyond onboard sensor reach from the aisle mouths."""
    return TrialSpec(
        trial_id=-1, seed=0,
        mission=Mission((1, 1), (5, 12)),
        obstacle_footprints=(((3, 8), (4, 8)), ((11, 8), (12, 8))))


def _run_one(args):
    config, tid, modes = args
    spec = build_trial(config, tid)
    return run_trial(config, spec, modes)


def run_experiment(config: Config, trials: int | None = None,
                   modes=None, progress=None,
                   parallel: int = 1) -> ExperimentSummary:
    """Generate and run the full paired experiment. Trials are
    share-nothing; with parallel > 1 they are farmed to worker processes
    and results are still collected in trial-id order."""
    n = trials if trials is not None else config.experiment.trials
    modes = tuple(modes if modes is not None else config.experiment.modes)
    tasks = [(config, tid, modes) for tid in range(n)]
    results = []
    if parallel > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(parallel) as pool:
            for result in pool.map(_run_one, tasks):
                results.append(result)
                if progress is not None:
                    progress(len(results), n)
    else:
        for task in tasks:
            results.append(_run_one(task))
            if progress is not None:
                progress(len(results), n)
    return ExperimentSummary.from_results(results)
