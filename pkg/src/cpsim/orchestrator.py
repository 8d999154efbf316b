"""Event-driven rule engine for the home-cleaning fleet.

Scripted detection events (humans, pets, trash, dirty floors, and their
clearances) drive a deterministic decision pipeline that halts robots for
safety, orders trash pickup before floor cleaning, and routes work to
capability-matched robots. Commands are derived state: replaying the same
event script always yields the same command log.

Rule order per event:
  1. human or pet in R        -> halt every robot operating in R
  2. clear in R               -> resume robots halted in R
  3. trash in R               -> dispatch an idle TPR to R, defer cleaners
  4. trash_cleared in R       -> recall the TPR, dispatch the matched cleaner
  5. dirty_floor in R         -> dispatch a matched cleaner if no trash is
                                 pending in R
Ties between idle robots break by lowest robot_id. With
halt_scope = global, rule 1 halts every operating robot anywhere and
rule 2 resumes only once no hazard remains anywhere.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

EVENT_CLASSES = ("human", "pet", "trash", "dirty_floor", "clear",
                 "trash_cleared")
REGION_KINDS = ("flat_floor", "staircase")
ROBOT_KINDS = ("RVC", "SCR", "TPR")

# Which robot kind cleans which region kind (TPR handles trash anywhere).
_CLEANER_FOR = {"flat_floor": "RVC", "staircase": "SCR"}

_HAZARDS = ("human", "pet")


class ScenarioError(Exception):
    """Bad scenario input: config, fleet, region, or script problems."""


@dataclass(frozen=True)
class DetectionEvent:
    time: float
    camera_id: int
    region_id: int
    cls: str
    cells: frozenset | None = None

    def __post_init__(self):
        if self.cls not in EVENT_CLASSES:
            raise ScenarioError(f"unknown event class {self.cls!r}")


@dataclass(frozen=True)
class CleaningRegion:
    region_id: int
    kind: str
    cleanable_cells: frozenset

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ScenarioError(f"region {self.region_id}: unknown kind "
                                f"{self.kind!r}")
        if not self.cleanable_cells:
            raise ScenarioError(f"region {self.region_id}: "
                                "cleanable_cells must be nonempty")


@dataclass
class RobotAgent:
    robot_id: int
    kind: str
    state: str = "idle"          # idle | dispatched | cleaning | halted
    region: int | None = None    # meaningful unless idle

    def __post_init__(self):
        if self.kind not in ROBOT_KINDS:
            raise ScenarioError(f"robot {self.robot_id}: unknown kind "
                                f"{self.kind!r}")

    def operating_in(self, region_id: int) -> bool:
        return self.state in ("dispatched", "cleaning") and \
            self.region == region_id

    @property
    def operating(self) -> bool:
        return self.state in ("dispatched", "cleaning")


@dataclass(frozen=True)
class Command:
    time: float
    robot_id: int
    action: str  # halt | resume | dispatch | recall
    region: int | None


@dataclass(frozen=True)
class RejectedEvent:
    event: DetectionEvent
    reason: str


class FleetState:
    """Mutable rule-engine state over a fixed region registry and fleet."""

    def __init__(self, regions, robots, halt_scope: str = "region"):
        if halt_scope not in ("region", "global"):
            raise ScenarioError(f"halt_scope must be region or global, "
                                f"got {halt_scope!r}")
        self.regions = {r.region_id: r for r in regions}
        if len(self.regions) != len(list(regions)):
            raise ScenarioError("duplicate region ids")
        self.robots = {r.robot_id: r for r in robots}
        if len(self.robots) != len(list(robots)):
            raise ScenarioError("duplicate robot ids")
        self.halt_scope = halt_scope
        self.hazards: set[int] = set()        # regions with uncleared hazard
        self.trash_pending: set[int] = set()
        self.wants_tpr: set[int] = set()
        self.wants_cleaner: set[int] = set()
        self.rejected: list[RejectedEvent] = []

    # -- helpers ----------------------------------------------------------

    def _blocked(self, region_id: int) -> bool:
        if self.halt_scope == "global":
            return bool(self.hazards)
        return region_id in self.hazards

    def _sorted_robots(self):
        return [self.robots[k] for k in sorted(self.robots)]

    def _idle(self, kind: str):
        for robot in self._sorted_robots():
            if robot.kind == kind and robot.state == "idle":
                return robot
        return None

    def _assigned(self, region_id: int, kinds) -> bool:
        return any(r.kind in kinds and r.region == region_id and
                   r.state in ("dispatched", "cleaning", "halted")
                   for r in self._sorted_robots())

    def _dispatch(self, robot: RobotAgent, region_id: int, time: float,
                  out: list):
        robot.state = "cleaning"  # zero travel time: work starts on arrival
        robot.region = region_id
        out.append(Command(time, robot.robot_id, "dispatch", region_id))

    def _allocate(self, time: float, out: list) -> None:
        """Grant deferred work that has become allowed, deterministically."""
        for region_id in sorted(self.wants_tpr):
            if self._blocked(region_id):
                continue
            robot = self._idle("TPR")
            if robot is None:
                continue
            self._dispatch(robot, region_id, time, out)
            self.wants_tpr.discard(region_id)
        for region_id in sorted(self.wants_cleaner):
            if self._blocked(region_id) or region_id in self.trash_pending:
                continue
            kind = _CLEANER_FOR[self.regions[region_id].kind]
            robot = self._idle(kind)
            if robot is None:
                continue
            self._dispatch(robot, region_id, time, out)
            self.wants_cleaner.discard(region_id)

    # -- state capture (cheap, for exhaustive exploration) ------------------

    def snapshot(self):
        return (tuple((r.state, r.region) for r in self._sorted_robots()),
                frozenset(self.hazards), frozenset(self.trash_pending),
                frozenset(self.wants_tpr), frozenset(self.wants_cleaner),
                len(self.rejected))

    def restore(self, snap) -> None:
        states, hazards, trash, tpr, cleaner, nrej = snap
        for robot, (state, region) in zip(self._sorted_robots(), states):
            robot.state = state
            robot.region = region
        self.hazards = set(hazards)
        self.trash_pending = set(trash)
        self.wants_tpr = set(tpr)
        self.wants_cleaner = set(cleaner)
        del self.rejected[nrej:]

    # -- event application --------------------------------------------------

    def _apply(self, ev: DetectionEvent, out: list) -> None:
        if ev.region_id not in self.regions:
            self.rejected.append(RejectedEvent(ev, "unknown region"))
            return
        rid = ev.region_id

        if ev.cls in _HAZARDS:
            self.hazards.add(rid)
            for robot in self._sorted_robots():
                if robot.operating and (self.halt_scope == "global" or
                                        robot.region == rid):
                    robot.state = "halted"
                    out.append(Command(ev.time, robot.robot_id, "halt",
                                       robot.region))

        elif ev.cls == "clear":
            if rid not in self.hazards:
                self.rejected.append(
                    RejectedEvent(ev, "no prior hazard to clear"))
                return
            self.hazards.discard(rid)
            for robot in self._sorted_robots():
                if robot.state != "halted":
                    continue
                if self.halt_scope == "global":
                    if self.hazards:
                        continue  # some other hazard still holds everyone
                elif robot.region != rid:
                    continue
                robot.state = "cleaning"
                out.append(Command(ev.time, robot.robot_id, "resume",
                                   robot.region))

        elif ev.cls == "trash":
            self.trash_pending.add(rid)
            if not self._assigned(rid, ("TPR",)):
                self.wants_tpr.add(rid)

        elif ev.cls == "trash_cleared":
            if rid not in self.trash_pending:
                self.rejected.append(
                    RejectedEvent(ev, "no pending trash to clear"))
                return
            self.trash_pending.discard(rid)
            self.wants_tpr.discard(rid)
            for robot in self._sorted_robots():
                if robot.kind == "TPR" and robot.region == rid and \
                        robot.state in ("dispatched", "cleaning", "halted"):
                    robot.state = "idle"
                    robot.region = None
                    out.append(Command(ev.time, robot.robot_id, "recall",
                                       rid))
            # Rule 4: the matched cleaner proceeds once the trash is gone.
            if not self._assigned(rid, ("RVC", "SCR")):
                self.wants_cleaner.add(rid)

        elif ev.cls == "dirty_floor":
            if not self._assigned(rid, ("RVC", "SCR")):
                self.wants_cleaner.add(rid)

        self._allocate(ev.time, out)

    def decide(self, pending_events) -> list[Command]:
        """Apply events (already sorted by time) and return the commands
        they produce, ordered by (time, robot_id)."""
        out: list[Command] = []
        last = -math.inf
        for ev in pending_events:
            if ev.time < last:
                raise ScenarioError("events must be sorted by time")
            last = ev.time
            self._apply(ev, out)
        out.sort(key=lambda c: (c.time, c.robot_id))
        return out


def decide(fleet_state: FleetState, pending_events) -> list[Command]:
    return fleet_state.decide(pending_events)


# -- scenario scripts -------------------------------------------------------


@dataclass(frozen=True)
class CleaningSetup:
    regions: tuple
    robots: tuple
    dwell: float = 60.0
    halt_scope: str = "region"


@dataclass(frozen=True)
class RegionMetrics:
    region_id: int
    kind: str
    coverage: float
    cleaned_at: float | None


@dataclass(frozen=True)
class ScenarioOutcome:
    commands: tuple
    metrics: tuple
    rejected: tuple

    def commands_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "robot_id", "action", "region"])
        for c in self.commands:
            writer.writerow([f"{c.time:.3f}", c.robot_id, c.action,
                             "" if c.region is None else c.region])
        return buf.getvalue()

    def metrics_text(self) -> str:
        lines = [f"{'region':<8} {'kind':<12} {'coverage':>9} "
                 f"{'cleaned_at':>11}"]
        for m in self.metrics:
            at = f"{m.cleaned_at:.3f}" if m.cleaned_at is not None else "-"
            lines.append(f"{m.region_id:<8} {m.kind:<12} "
                         f"{m.coverage:>9.3f} {at:>11}")
        lines.append("")
        lines.append(f"rejected events: {len(self.rejected)}")
        for r in self.rejected:
            lines.append(f"  t={r.event.time:g} {r.event.cls} "
                         f"region {r.event.region_id}: {r.reason}")
        lines.append("note: cleaning-performance metric is not implemented; "
                     "only coverage and time are tracked")
        lines.append("")
        return "\n".join(lines)


def parse_script(text: str) -> list[DetectionEvent]:
    """Line format: `time class region_id [camera_id]`; # comments and
    blank lines allowed. trash-cleared and dirty-floor spellings accepted."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ScenarioError(
                f"script line {lineno}: expected 'time class region_id "
                f"[camera_id]', got {raw!r}")
        try:
            time = float(parts[0])
            cls = parts[1].replace("-", "_")
            region_id = int(parts[2])
            camera_id = int(parts[3]) if len(parts) == 4 else 0
        except ValueError as e:
            raise ScenarioError(f"script line {lineno}: {e}") from e
        if cls not in EVENT_CLASSES:
            raise ScenarioError(f"script line {lineno}: unknown class "
                                f"{parts[1]!r}")
        events.append(DetectionEvent(time, camera_id, region_id, cls))
    if any(b.time < a.time for a, b in zip(events, events[1:])):
        raise ScenarioError("script events must be sorted by time")
    return events


class _DwellTracker:
    """Per-robot cleaning progress with pause on halt."""

    def __init__(self, dwell: float):
        self.dwell = dwell
        self.progress: dict[int, float] = {}

    def accrue(self, robots, span: float) -> None:
        for robot in robots:
            if robot.state == "cleaning" and robot.kind in ("RVC", "SCR"):
                self.progress[robot.robot_id] = \
                    self.progress.get(robot.robot_id, 0.0) + span

    def next_completion(self, robots):
        """(robot, remaining) for the active cleaner finishing soonest."""
        best = None
        for robot in robots:
            if robot.state != "cleaning" or robot.kind not in ("RVC", "SCR"):
                continue
            remaining = self.dwell - self.progress.get(robot.robot_id, 0.0)
            if best is None or remaining < best[1] or \
                    (remaining == best[1] and robot.robot_id < best[0].robot_id):
                best = (robot, remaining)
        return best


def run_scenario(script, setup: CleaningSetup) -> ScenarioOutcome:
    """Replay a scripted event timeline through the rule engine with a
    dwell-time cleaning model: a cleaner that accumulates `dwell` seconds
    of unhalted work marks its whole region cleaned and goes idle."""
    events = parse_script(script) if isinstance(script, str) else list(script)
    state = FleetState(setup.regions, setup.robots, setup.halt_scope)
    tracker = _DwellTracker(setup.dwell)
    robots = state._sorted_robots()
    commands: list[Command] = []
    cleaned_at: dict[int, float] = {}
    clock = 0.0

    def advance_to(limit: float) -> None:
        """Accrue dwell up to `limit`, emitting completions along the way."""
        nonlocal clock
        while True:
            nxt = tracker.next_completion(robots)
            if nxt is None:
                break
            robot, remaining = nxt
            finish = clock + remaining
            if finish > limit:
                break
            tracker.accrue(robots, remaining)
            clock = finish
            region_id = robot.region
            cleaned_at.setdefault(region_id, clock)
            robot.state = "idle"
            robot.region = None
            tracker.progress[robot.robot_id] = 0.0
            batch: list[Command] = []
            state._allocate(clock, batch)  # freed robot may pick up work
            batch.sort(key=lambda c: (c.time, c.robot_id))
            commands.extend(batch)
        if limit > clock and not math.isinf(limit):
            tracker.accrue(robots, limit - clock)
            clock = limit

    for ev in events:
        if ev.time < clock:
            raise ScenarioError("script events must be sorted by time")
        advance_to(ev.time)
        commands.extend(state.decide([ev]))
    advance_to(math.inf)

    metrics = []
    for region_id in sorted(state.regions):
        region = state.regions[region_id]
        done = region_id in cleaned_at
        metrics.append(RegionMetrics(
            region_id=region_id, kind=region.kind,
            coverage=1.0 if done else 0.0,
            cleaned_at=cleaned_at.get(region_id)))
    return ScenarioOutcome(commands=tuple(commands), metrics=tuple(metrics),
                           rejected=tuple(state.rejected))


# -- configuration -----------------------------------------------------------

_CLEAN_SCHEMA = {
    "regions": None,   # region_<id> keys
    "fleet": None,     # robot_<id> keys
    "cleaning": {"dwell", "halt_scope"},
}


def load_cleaning_setup(path) -> CleaningSetup:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as e:
        raise ScenarioError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ScenarioError(f"{path}: {e}") from e

    for section in parser.sections():
        if section not in _CLEAN_SCHEMA:
            raise ScenarioError(f"{path}: unknown section [{section}]")
        allowed = _CLEAN_SCHEMA[section]
        for key in parser.options(section):
            if allowed is not None and key not in allowed:
                raise ScenarioError(
                    f"{path}: unknown key {key!r} in [{section}]")
            if allowed is None:
                prefix = "region_" if section == "regions" else "robot_"
                if not key.startswith(prefix):
                    raise ScenarioError(
                        f"{path}: unknown key {key!r} in [{section}]")

    regions = []
    if parser.has_section("regions"):
        for key in parser.options("regions"):
            try:
                region_id = int(key[len("region_"):])
            except ValueError as e:
                raise ScenarioError(f"{path}: bad region key {key!r}") from e
            parts = [p.strip() for p in parser.get("regions", key).split(",")]
            if len(parts) != 5:
                raise ScenarioError(
                    f"{path}: {key} expects 'kind,x0,y0,x1,y1'")
            kind = parts[0]
            try:
                x0, y0, x1, y1 = (int(p) for p in parts[1:])
            except ValueError as e:
                raise ScenarioError(f"{path}: {key}: {e}") from e
            if x1 < x0 or y1 < y0:
                raise ScenarioError(f"{path}: {key}: empty rect")
            cells = frozenset((x, y) for y in range(y0, y1 + 1)
                              for x in range(x0, x1 + 1))
            regions.append(CleaningRegion(region_id, kind, cells))
    regions.sort(key=lambda r: r.region_id)

    robots = []
    if parser.has_section("fleet"):
        for key in parser.options("fleet"):
            try:
                robot_id = int(key[len("robot_"):])
            except ValueError as e:
                raise ScenarioError(f"{path}: bad robot key {key!r}") from e
            robots.append(RobotAgent(robot_id, parser.get("fleet", key)))
    robots.sort(key=lambda r: r.robot_id)

    if not regions:
        raise ScenarioError(f"{path}: at least one region is required")
    if not robots:
        raise ScenarioError(f"{path}: at least one robot is required")

    dwell = 60.0
    halt_scope = "region"
    if parser.has_section("cleaning"):
        if parser.has_option("cleaning", "dwell"):
            try:
                dwell = float(parser.get("cleaning", "dwell"))
            except ValueError as e:
                raise ScenarioError(f"{path}: bad dwell: {e}") from e
        if parser.has_option("cleaning", "halt_scope"):
            halt_scope = parser.get("cleaning", "halt_scope")
    if dwell <= 0:
        raise ScenarioError(f"{path}: dwell must be > 0")

    return CleaningSetup(regions=tuple(regions), robots=tuple(robots),
                         dwell=dwell, halt_scope=halt_scope)
