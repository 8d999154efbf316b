"""Config loading: schema strictness, units, defaults, path handling."""

import math
from pathlib import Path

import pytest

from cpsim.config import ConfigError, ExperimentConfig, load_config

DATA = Path(__file__).resolve().parents[1] / "src" / "cpsim" / "data"

MINIMAL = "[world]\nmap = m.txt\nresolution = 0.5\n"


def write_cfg(tmp_path, text=MINIMAL, map_text="...\n...\n...\n"):
    (tmp_path / "m.txt").write_text(map_text)
    cfg = tmp_path / "run.ini"
    cfg.write_text(text)
    return cfg


class TestPackagedConfigs:
    def test_demo_ini(self):
        config = load_config(DATA / "demo.ini")
        assert config.resolution == 0.1
        assert [a.id for a in config.aisles] == [1, 2, 3]
        assert all(a.overhead_sensor for a in config.aisles)
        assert config.robot_speed == 1.0
        assert config.sensor.range == 0.35
        # Angles are written in degrees and stored in radians.
        assert config.sensor.angular_resolution == \
            pytest.approx(math.radians(0.5))
        assert config.sensor.fov == pytest.approx(math.tau)
        assert config.share_latency == 0.0
        assert config.inflation.inscribed_radius == 0.05
        assert config.inflation.inflation_radius == 0.15
        assert config.schedule.eps_start == 3.0
        assert config.timing.t_per_expansion == pytest.approx(1e-5)
        assert config.experiment.trials == 10
        assert config.experiment.seed == 11
        assert config.experiment.modes == ("SP", "CP")
        lines = config.map_text().splitlines()
        assert len(lines) == 13 and len(lines[0]) == 23

    def test_default_ini(self):
        config = load_config(DATA / "default.ini")
        assert config.experiment.trials == 50
        assert config.experiment.seed == 7
        assert len(config.aisles) == 5
        lines = config.map_text().splitlines()
        assert len(lines) == 300 and len(lines[0]) == 500


class TestSchema:
    def test_minimal_defaults(self, tmp_path):
        config = load_config(write_cfg(tmp_path))
        assert config.robot_speed == 1.0
        assert config.sensor.range == 5.0
        assert config.share_latency == 0.0
        assert config.inflation.cost_scaling_factor == 10.0
        assert config.schedule.eps_final == 1.0
        assert config.planner_budget is None
        assert config.timing.overhead == 0.0
        assert config.experiment.trials == 50
        assert config.aisles == ()

    def test_unknown_section_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[rendering]\ndpi = 300\n")
        with pytest.raises(ConfigError, match=r"unknown section \[rendering\]"):
            load_config(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[robot]\nspeeed = 2\n")
        with pytest.raises(ConfigError, match="unknown key 'speeed'"):
            load_config(cfg)

    def test_map_required(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[world]\nresolution = 0.5\n")
        with pytest.raises(ConfigError, match="map is required"):
            load_config(cfg)

    def test_resolution_required(self, tmp_path):
        (tmp_path / "m.txt").write_text("..\n")
        cfg = tmp_path / "run.ini"
        cfg.write_text("[world]\nmap = m.txt\n")
        with pytest.raises(ConfigError, match="resolution is required"):
            load_config(cfg)

    def test_missing_map_file(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[world]\nmap = nope.txt\nresolution = 0.5\n")
        with pytest.raises(ConfigError, match="map file not found"):
            load_config(cfg)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "absent.ini")


class TestValues:
    def test_map_path_relative_to_config_dir(self, tmp_path):
        sub = tmp_path / "configs"
        sub.mkdir()
        (sub / "m.txt").write_text("..\n..\n")
        cfg = sub / "run.ini"
        cfg.write_text(MINIMAL)
        config = load_config(cfg)
        assert config.map_path == sub / "m.txt"
        assert config.map_text() == "..\n..\n"

    def test_aisle_parsing(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL +
                        "aisle_2 = 1,0,2,2,nosensor\naisle_1 = 0,0,0,2,sensor\n")
        config = load_config(cfg)
        assert [a.id for a in config.aisles] == [1, 2]  # sorted by id
        assert config.aisles[0].rect == (0, 0, 0, 2)
        assert config.aisles[0].overhead_sensor is True
        assert config.aisles[1].overhead_sensor is False

    def test_bad_aisle_flag(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "aisle_1 = 0,0,1,1,maybe\n")
        with pytest.raises(ConfigError, match="sensor|nosensor"):
            load_config(cfg)

    def test_bad_aisle_coord(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "aisle_1 = 0,0,one,1,sensor\n")
        with pytest.raises(ConfigError, match="aisle_1"):
            load_config(cfg)

    def test_degrees_to_radians(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL +
                        "[sensing]\nangular_resolution = 90\nfov = 180\n")
        config = load_config(cfg)
        assert config.sensor.angular_resolution == pytest.approx(math.pi / 2)
        assert config.sensor.fov == pytest.approx(math.pi)

    def test_mode_mapping(self, tmp_path):
        for key, modes in (("sp", ("SP",)), ("cp", ("CP",)),
                           ("both", ("SP", "CP"))):
            cfg = write_cfg(tmp_path, MINIMAL +
                            f"[experiment]\nmode = {key}\n")
            assert load_config(cfg).experiment.modes == modes

    def test_bad_mode(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[experiment]\nmode = dual\n")
        with pytest.raises(ConfigError, match="mode must be"):
            load_config(cfg)

    def test_nonpositive_resolution(self, tmp_path):
        cfg = write_cfg(tmp_path, "[world]\nmap = m.txt\nresolution = 0\n")
        with pytest.raises(ConfigError, match="resolution"):
            load_config(cfg)

    def test_nonpositive_speed(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[robot]\nspeed = -1\n")
        with pytest.raises(ConfigError, match="speed"):
            load_config(cfg)

    def test_negative_latency(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[sensing]\nshare_latency = -2\n")
        with pytest.raises(ConfigError, match="share_latency"):
            load_config(cfg)

    def test_negative_budget(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[planner]\nbudget = -5\n")
        with pytest.raises(ConfigError, match="budget"):
            load_config(cfg)

    def test_unparseable_number(self, tmp_path):
        cfg = write_cfg(tmp_path, MINIMAL + "[timing]\noverhead = fast\n")
        with pytest.raises(ConfigError, match="overhead"):
            load_config(cfg)


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ConfigError, match="trials"):
            ExperimentConfig(trials=0)
        with pytest.raises(ConfigError, match="obstacles_per_trial"):
            ExperimentConfig(obstacles_per_trial=-1)
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig(seed=-1)
        with pytest.raises(ConfigError, match="dimensions"):
            ExperimentConfig(obstacle_width=0.0)

    def test_frozen(self):
        config = ExperimentConfig()
        with pytest.raises(AttributeError):
            config.trials = 5
