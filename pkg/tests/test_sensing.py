"""Sensing tests: raycast traversal against a per-cell segment-intersection
oracle, overhead scans, update policies, and the central server."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cpsim.costmap import InflationParams, inflate, mark_lethal
from cpsim.sensing import (
    CentralServer,
    PerceptionUpdate,
    SensorConfig,
    apply_update_cp,
    apply_update_sp,
    onboard_scan,
    overhead_scan,
    ray_angles,
    ray_directions,
    raycast_visible_cells,
    raycast_with_directions,
)
from cpsim.world import AisleRegion, RobotState, load_world, spawn_obstacle

TWO_PI = 2.0 * math.pi


def cfg(resolution=0.1, aisles=()):
    return SimpleNamespace(resolution=resolution, aisles=list(aisles))


def open_world(w, h, res=0.1):
    return load_world("\n".join("." * w for _ in range(h)), cfg(res))


def oracle_visible(world, pose, dirs, range_m):
    """Reference raycast: a cell is visible iff some ray's segment has a
    positive-length intersection with the open cell interior before the
    first blocking cell (blocker included) and before the range limit.

    Uses the same boundary expressions (k * res - p) / u as the traversal
    under test, so agreement is exact, not approximate. Assumes the pose
    is not exactly on a grid line.
    """
    res = world.resolution
    px, py = pose
    occ = world.occupied_mask()
    c0 = world.cell_of(pose)
    visible = {c0}
    if occ[c0[1], c0[0]] or range_m <= 0:
        return visible
    for ux, uy in dirs:
        # builtin floats divide to inf silently; numpy scalars would warn
        # on subnormal components even though inf is the intended slab
        ux, uy = float(ux), float(uy)
        entries = []
        for y in range(world.height):
            for x in range(world.width):
                if ux > 0.0:
                    t0x = (x * res - px) / ux
                    t1x = ((x + 1) * res - px) / ux
                elif ux < 0.0:
                    t0x = ((x + 1) * res - px) / ux
                    t1x = (x * res - px) / ux
                else:
                    if not (x * res < px < (x + 1) * res):
                        continue
                    t0x, t1x = -math.inf, math.inf
                if uy > 0.0:
                    t0y = (y * res - py) / uy
                    t1y = ((y + 1) * res - py) / uy
                elif uy < 0.0:
                    t0y = ((y + 1) * res - py) / uy
                    t1y = (y * res - py) / uy
                else:
                    if not (y * res < py < (y + 1) * res):
                        continue
                    t0y, t1y = -math.inf, math.inf
                t0 = max(t0x, t0y, 0.0)
                t1 = min(t1x, t1y, range_m)
                if t0 < t1:
                    entries.append((t0, (x, y)))
        entries.sort(key=lambda e: (e[0], e[1]))
        for _, cell in entries:
            if cell == c0:
                continue
            visible.add(cell)
            if occ[cell[1], cell[0]]:
                break
    return visible


class TestSensorConfig:
    def test_defaults(self):
        s = SensorConfig()
        assert s.range == 5.0
        assert s.fov == pytest.approx(TWO_PI)
        assert s.angular_resolution == pytest.approx(math.radians(0.5))

    def test_validation(self):
        with pytest.raises(ValueError):
            SensorConfig(range=-1.0)
        with pytest.raises(ValueError):
            SensorConfig(angular_resolution=0.0)
        with pytest.raises(ValueError):
            SensorConfig(angular_resolution=0.5, fov=0.4)
        with pytest.raises(ValueError):
            SensorConfig(fov=7.0)

    def test_full_circle_ray_count(self):
        angles = ray_angles(0.0, SensorConfig())
        assert len(angles) == 720
        assert angles[0] == 0.0
        assert angles[1] == pytest.approx(math.radians(0.5))

    def test_partial_fov_fan(self):
        s = SensorConfig(fov=math.pi / 2, angular_resolution=math.pi / 8)
        angles = ray_angles(1.0, s)
        assert len(angles) == 5
        assert angles[0] == pytest.approx(1.0 - math.pi / 4)
        assert angles[-1] == pytest.approx(1.0 + math.pi / 4)

    def test_directions_are_unit(self):
        dirs = ray_directions(0.3, SensorConfig(angular_resolution=math.radians(5)))
        norms = np.hypot(dirs[:, 0], dirs[:, 1])
        assert np.allclose(norms, 1.0)


class TestRaycast:
    def test_own_cell_only_at_range_zero(self):
        w = open_world(5, 5)
        s = SensorConfig(range=0.0)
        assert raycast_visible_cells(w, w.center_of((2, 2)), s) == {(2, 2)}

    def test_open_grid_matches_oracle(self):
        w = open_world(21, 21)
        pose = w.center_of((10, 10))
        sensor = SensorConfig(range=0.3, angular_resolution=math.radians(1.0))
        dirs = ray_directions(0.0, sensor)
        got = raycast_visible_cells(w, pose, sensor)
        assert got == oracle_visible(w, pose, dirs, sensor.range)
        # Everything within one cell of the sensor must be seen.
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                assert (10 + dx, 10 + dy) in got

    def test_wall_blocks_and_is_visible(self):
        w = load_world("\n".join([
            ".........",
            ".........",
            "#########",
            ".........",
            ".........",
        ]), cfg())
        pose = w.center_of((4, 0))
        sensor = SensorConfig(range=2.0, angular_resolution=math.radians(2.0))
        got = raycast_visible_cells(w, pose, sensor)
        assert (4, 2) in got          # wall cell straight ahead is hit
        assert all(cell[1] < 3 for cell in got)  # nothing beyond the wall

    def test_exact_corner_hit_steps_diagonally(self):
        w = open_world(6, 6)
        pose = w.center_of((0, 0))
        u = 0.7071067811865476
        dirs = np.array([[u, u]], dtype=np.float64)
        got = raycast_with_directions(w, pose, dirs, 0.5)
        # tx == ty at every boundary: the ray walks the diagonal without
        # touching the side cells.
        assert got == oracle_visible(w, pose, dirs, 0.5)
        # Entry into (4, 4) happens at t = 0.35 * sqrt(2) ~ 0.495 < 0.5.
        assert got == {(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)}

    def test_blocked_sensor_cell_sees_itself_only(self):
        w = open_world(5, 5)
        spawn_obstacle(w, [(2, 2)], 0.0)
        got = raycast_visible_cells(w, w.center_of((2, 2)), SensorConfig(range=1.0))
        assert got == {(2, 2)}

    def test_entry_exactly_at_range_excluded(self):
        w = open_world(9, 1)
        pose = w.center_of((0, 0))
        dirs = np.array([[1.0, 0.0]], dtype=np.float64)
        # Boundary of cell 5 sits at 0.5 m; entering at t == range must not count.
        range_m = (5 * 0.1 - pose[0]) / 1.0
        got = raycast_with_directions(w, pose, dirs, range_m)
        assert (5, 0) not in got
        assert (4, 0) in got
        assert got == oracle_visible(w, pose, dirs, range_m)

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_random_worlds_match_oracle(self, data):
        w_cells = data.draw(st.integers(4, 14), label="width")
        h_cells = data.draw(st.integers(4, 14), label="height")
        res = data.draw(st.sampled_from([0.1, 0.25]), label="res")
        world = open_world(w_cells, h_cells, res)
        n_blocked = data.draw(st.integers(0, 10), label="blocked")
        cells = [(x, y) for y in range(h_cells) for x in range(w_cells)]
        blocked = data.draw(
            st.lists(st.sampled_from(cells), min_size=n_blocked,
                     max_size=n_blocked, unique=True), label="cells")
        pose_cell = data.draw(st.sampled_from(cells), label="pose")
        assume(pose_cell not in blocked)
        if blocked:
            spawn_obstacle(world, blocked, 0.0)
        n_rays = data.draw(st.integers(1, 24), label="rays")
        heading = data.draw(st.floats(0.0, TWO_PI, allow_nan=False), label="heading")
        sensor = SensorConfig(range=data.draw(
            st.sampled_from([0.15, 0.4, 1.05, 3.0]), label="range"),
            angular_resolution=TWO_PI / n_rays)
        dirs = ray_directions(heading, sensor)
        pose = world.center_of(pose_cell)
        got = raycast_with_directions(world, pose, dirs, sensor.range)
        assert got == oracle_visible(world, pose, dirs, sensor.range)


class TestScans:
    def make_world(self):
        rows = [
            "..........",
            "..........",
            "..####....",
            "..........",
            "..........",
        ]
        aisles = [AisleRegion(0, (0, 0, 9, 1), overhead_sensor=True),
                  AisleRegion(1, (0, 3, 9, 4), overhead_sensor=False)]
        return load_world("\n".join(rows), cfg(aisles=aisles))

    def test_onboard_detects_visible_obstacle_cells(self):
        w = self.make_world()
        spawn_obstacle(w, [(5, 0), (5, 1)], 0.0)
        robot = RobotState(0, w.center_of((3, 0)), sensor=SensorConfig(range=1.0))
        upd = onboard_scan(w, robot)
        assert upd.source == ("onboard", 0)
        assert upd.time == w.clock
        assert (5, 0) in upd.detected_cells
        assert all(not w.is_rack(c) for c in upd.detected_cells)

    def test_onboard_never_reports_racks(self):
        w = self.make_world()
        robot = RobotState(0, w.center_of((3, 1)), sensor=SensorConfig(range=3.0))
        assert onboard_scan(w, robot).detected_cells == frozenset()

    def test_occluded_obstacle_not_detected(self):
        w = self.make_world()
        # Behind the rack wall relative to the robot.
        spawn_obstacle(w, [(3, 3)], 0.0)
        robot = RobotState(0, w.center_of((3, 1)), sensor=SensorConfig(range=1.5))
        assert onboard_scan(w, robot).detected_cells == frozenset()

    def test_out_of_range_obstacle_not_detected(self):
        w = self.make_world()
        spawn_obstacle(w, [(9, 0)], 0.0)
        robot = RobotState(0, w.center_of((0, 0)), sensor=SensorConfig(range=0.3))
        assert onboard_scan(w, robot).detected_cells == frozenset()

    def test_overhead_sees_whole_aisle_ignoring_occlusion(self):
        w = self.make_world()
        spawn_obstacle(w, [(0, 0), (1, 0)], 0.0)
        spawn_obstacle(w, [(9, 1)], 0.0)
        upd = overhead_scan(w, w.aisles[0])
        assert upd.source == ("overhead", 0)
        assert upd.detected_cells == frozenset({(0, 0), (1, 0), (9, 1)})

    def test_overhead_out_of_rect_invisible(self):
        w = self.make_world()
        spawn_obstacle(w, [(0, 4)], 0.0)
        assert overhead_scan(w, w.aisles[0]).detected_cells == frozenset()

    def test_overhead_straddling_clipped(self):
        w = self.make_world()
        spawn_obstacle(w, [(7, 1), (7, 3)], 0.0)  # spans covered + uncovered
        assert overhead_scan(w, w.aisles[0]).detected_cells == frozenset({(7, 1)})

    def test_overhead_requires_sensor(self):
        w = self.make_world()
        with pytest.raises(ValueError, match="no overhead sensor"):
            overhead_scan(w, w.aisles[1])

    def test_no_hallucination(self):
        w = self.make_world()
        spawn_obstacle(w, [(5, 3), (5, 4)], 0.0)
        robot = RobotState(0, w.center_of((2, 4)), sensor=SensorConfig(range=4.0))
        occ = w.occupied_mask()
        for upd in (onboard_scan(w, robot), overhead_scan(w, w.aisles[0])):
            assert all(occ[y, x] for x, y in upd.detected_cells)


class TestUpdatePolicies:
    def setup_method(self):
        self.params = InflationParams(inscribed_radius=0.1,
                                      inflation_radius=0.3,
                                      cost_scaling_factor=10.0)
        self.world = open_world(12, 8)
        self.base = inflate(
            mark_lethal(__import__("cpsim.costmap", fromlist=["Costmap"]).Costmap.empty(
                12, 8, 0.1), []), self.params)

    def test_sp_marks_and_inflates(self):
        upd = PerceptionUpdate(("onboard", 0), frozenset({(5, 4)}), 0.0)
        out = apply_update_sp(self.base, upd, self.params)
        assert out.cost_at((5, 4)) == 254
        assert out.cost_at((4, 4)) == 253
        assert out.cost_at((4, 3)) == 166

    def test_sp_rejects_overhead_source(self):
        upd = PerceptionUpdate(("overhead", 1), frozenset({(5, 4)}), 0.0)
        with pytest.raises(ValueError):
            apply_update_sp(self.base, upd, self.params)

    def test_noop_update_returns_same_map(self):
        upd = PerceptionUpdate(("onboard", 0), frozenset(), 0.0)
        assert apply_update_sp(self.base, upd, self.params) is self.base

    def test_cp_fuses_multiple_sources(self):
        updates = [
            PerceptionUpdate(("overhead", 0), frozenset({(2, 2)}), 0.0),
            PerceptionUpdate(("overhead", 1), frozenset({(9, 5)}), 0.0),
            PerceptionUpdate(("onboard", 0), frozenset({(2, 2), (3, 2)}), 0.0),
        ]
        out = apply_update_cp(self.base, updates, self.params)
        for cell in [(2, 2), (9, 5), (3, 2)]:
            assert out.cost_at(cell) == 254

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 7)),
                             min_size=0, max_size=4),
                    min_size=1, max_size=5))
    def test_incremental_equals_batch(self, waves):
        # Folding updates one at a time over an inflated map must equal
        # inflating the raw layer with the union (the executive depends
        # on this to re-inflate in place).
        incremental = self.base
        seen = set()
        for i, wave in enumerate(waves):
            upd = PerceptionUpdate(("onboard", 0), frozenset(wave), float(i))
            incremental = apply_update_sp(incremental, upd, self.params)
            seen |= set(wave)
        from cpsim.costmap import Costmap
        raw = mark_lethal(Costmap.empty(12, 8, 0.1), sorted(seen))
        batch = inflate(raw, self.params)
        assert np.array_equal(incremental.costs, batch.costs)


class TestCentralServer:
    def test_zero_latency_immediate(self):
        server = CentralServer()
        server.submit(PerceptionUpdate(("overhead", 0), frozenset({(1, 1)}), 5.0))
        assert server.known_cells_at(5.0) == frozenset({(1, 1)})

    def test_latency_delays_visibility(self):
        server = CentralServer(share_latency=2.0)
        server.submit(PerceptionUpdate(("overhead", 0), frozenset({(1, 1)}), 1.0))
        assert server.known_cells_at(2.9) == frozenset()
        assert server.known_cells_at(3.0) == frozenset({(1, 1)})

    def test_earliest_submission_wins(self):
        server = CentralServer(share_latency=1.0)
        server.submit(PerceptionUpdate(("overhead", 0), frozenset({(1, 1)}), 1.0))
        server.submit(PerceptionUpdate(("onboard", 0), frozenset({(1, 1)}), 5.0))
        assert server.known_cells_at(2.0) == frozenset({(1, 1)})

    def test_knowledge_monotone(self):
        server = CentralServer()
        server.submit(PerceptionUpdate(("overhead", 0), frozenset({(1, 1)}), 0.0))
        server.submit(PerceptionUpdate(("overhead", 1), frozenset({(2, 2)}), 1.0))
        a = server.known_cells_at(0.5)
        b = server.known_cells_at(1.5)
        assert a <= b

    def test_negative_latency_rejected(self):
        with pytest.raises(ValueError):
            CentralServer(share_latency=-0.1)
