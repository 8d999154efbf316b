"""Strict INI configuration for simulation runs.

Every key is schema-checked: unknown sections or keys are errors, so a
typo like `inflation_radiius` fails loudly instead of silently using a
default. Angles are written in degrees in the file and converted here.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .costmap import InflationParams
from .executive import TimingModel
from .planner import EdgeCostParams, EpsilonSchedule
from .sensing import SensorConfig
from .world import AisleRegion


class ConfigError(Exception):
    """Raised for unreadable, unknown, or invalid configuration input."""


_SCHEMA = {
    "world": {"map", "resolution"},  # plus aisle_<id> keys, checked apart
    "robot": {"speed"},
    "sensing": {"range", "angular_resolution", "fov", "share_latency"},
    "inflation": {"inscribed_radius", "inflation_radius",
                  "cost_scaling_factor"},
    "planner": {"eps_start", "eps_step", "eps_final", "cost_weight",
                "budget"},
    "timing": {"t_per_expansion", "overhead"},
    "experiment": {"trials", "obstacles_per_trial", "seed",
                   "obstacle_width", "obstacle_height", "mode", "out"},
}

_MODES = {"sp": ("SP",), "cp": ("CP",), "both": ("SP", "CP")}


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 50
    obstacles_per_trial: int = 2
    seed: int = 0
    obstacle_width: float = 0.6   # meters, footprint side A
    obstacle_height: float = 1.8  # meters, footprint side B
    modes: tuple = ("SP", "CP")
    out: str = "out"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if self.obstacles_per_trial < 0:
            raise ConfigError("experiment.obstacles_per_trial must be >= 0")
        if self.seed < 0:
            raise ConfigError("experiment.seed must be >= 0")
        if self.obstacle_width <= 0 or self.obstacle_height <= 0:
            raise ConfigError("obstacle dimensions must be > 0")


@dataclass(frozen=True)
class Config:
    """Materialized run configuration; sub-objects are the same dataclasses
    the library layers consume."""

    map_path: Path
    resolution: float
    aisles: tuple
    robot_speed: float
    sensor: SensorConfig
    share_latency: float
    inflation: InflationParams
    schedule: EpsilonSchedule
    edge_params: EdgeCostParams
    planner_budget: int | None
    timing: TimingModel
    experiment: ExperimentConfig
    source: Path | None = None

    def map_text(self) -> str:
        try:
            return self.map_path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read map {self.map_path}: {e}") from e


def _parse_aisle(aisle_id: int, raw: str) -> AisleRegion:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 5 or parts[4] not in ("sensor", "nosensor"):
        raise ConfigError(
            f"aisle_{aisle_id}: expected 'x0,y0,x1,y1,sensor|nosensor', "
            f"got {raw!r}")
    try:
        rect = tuple(int(p) for p in parts[:4])
    except ValueError as e:
        raise ConfigError(f"aisle_{aisle_id}: {e}") from e
    return AisleRegion(aisle_id, rect, overhead_sensor=parts[4] == "sensor")


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {e}") from e


def load_config(path) -> Config:
    """Parse and validate an INI file, resolving the map path relative to
    the file's own directory."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        allowed = _SCHEMA[section]
        for key in parser.options(section):
            if key in allowed:
                continue
            if section == "world" and key.startswith("aisle_"):
                continue
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    if not parser.has_option("world", "map"):
        raise ConfigError(f"{path}: [world] map is required")
    if not parser.has_option("world", "resolution"):
        raise ConfigError(f"{path}: [world] resolution is required")
    map_path = Path(parser.get("world", "map"))
    if not map_path.is_absolute():
        map_path = path.parent / map_path
    if not map_path.is_file():
        raise ConfigError(f"{path}: map file not found: {map_path}")
    resolution = _get(parser, "world", "resolution", float, None)
    if resolution is None or resolution <= 0:
        raise ConfigError(f"{path}: [world] resolution must be > 0")

    aisles = []
    for key in parser.options("world"):
        if not key.startswith("aisle_"):
            continue
        try:
            aisle_id = int(key[len("aisle_"):])
        except ValueError as e:
            raise ConfigError(f"{path}: bad aisle key {key!r}") from e
        aisles.append(_parse_aisle(aisle_id, parser.get("world", key)))
    aisles.sort(key=lambda a: a.id)

    speed = _get(parser, "robot", "speed", float, 1.0)
    if speed <= 0:
        raise ConfigError(f"{path}: [robot] speed must be > 0")

    try:
        sensor = SensorConfig(
            range=_get(parser, "sensing", "range", float, 5.0),
            angular_resolution=math.radians(
                _get(parser, "sensing", "angular_resolution", float, 0.5)),
            fov=math.radians(_get(parser, "sensing", "fov", float, 360.0)))
        share_latency = _get(parser, "sensing", "share_latency", float, 0.0)
        if share_latency < 0:
            raise ConfigError("sensing.share_latency must be >= 0")
        inflation = InflationParams(
            inscribed_radius=_get(parser, "inflation", "inscribed_radius",
                                  float, 0.3),
            inflation_radius=_get(parser, "inflation", "inflation_radius",
                                  float, 0.55),
            cost_scaling_factor=_get(parser, "inflation",
                                     "cost_scaling_factor", float, 10.0))
        schedule = EpsilonSchedule(
            eps_start=_get(parser, "planner", "eps_start", float, 3.0),
            eps_step=_get(parser, "planner", "eps_step", float, 0.5),
            eps_final=_get(parser, "planner", "eps_final", float, 1.0))
        edge_params = EdgeCostParams(
            cost_weight=_get(parser, "planner", "cost_weight", int, 1))
        timing = TimingModel(
            t_per_expansion=_get(parser, "timing", "t_per_expansion",
                                 float, 1e-5),
            overhead=_get(parser, "timing", "overhead", float, 0.0))
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e

    budget = _get(parser, "planner", "budget", int, None)
    if budget is not None and budget < 0:
        raise ConfigError(f"{path}: [planner] budget must be >= 0")

    mode_key = _get(parser, "experiment", "mode", str, "both").lower()
    if mode_key not in _MODES:
        raise ConfigError(f"{path}: [experiment] mode must be sp, cp or both")
    experiment = ExperimentConfig(
        trials=_get(parser, "experiment", "trials", int, 50),
        obstacles_per_trial=_get(parser, "experiment", "obstacles_per_trial",
                                 int, 2),
        seed=_get(parser, "experiment", "seed", int, 0),
        obstacle_width=_get(parser, "experiment", "obstacle_width",
                            float, 0.6),
        obstacle_height=_get(parser, "experiment", "obstacle_height",
                             float, 1.8),
        modes=_MODES[mode_key],
        out=_get(parser, "experiment", "out", str, "out"))

    return Config(map_path=map_path, resolution=resolution,
                  aisles=tuple(aisles), robot_speed=speed, sensor=sensor,
                  share_latency=share_latency, inflation=inflation,
                  schedule=schedule, edge_params=edge_params,
                  planner_budget=budget, timing=timing,
                  experiment=experiment, source=path)
