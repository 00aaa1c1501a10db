import json

import numpy as np
import pytest

from cmacarm import dataio
from cmacarm.config import (ConfigError, DatasetSpec, build_planar_model,
                            load_experiment)
from cmacarm.dynamics import LinkParams, RobotModel
from cmacarm.network import build_microzones, train, TrainingConfig


class TestHashes:
    def test_robot_hash_sensitive_to_parameters(self, twolink, pendulum):
        assert dataio.robot_hash(twolink) != dataio.robot_hash(pendulum)
        perturbed = RobotModel(links=(twolink.links[0],
                                      LinkParams(0.81, 0.7, 0.35, 0.02)),
                               gravity_mag=twolink.gravity_mag)
        assert dataio.robot_hash(twolink) != dataio.robot_hash(perturbed)

    def test_robot_hash_stable(self, twolink):
        assert dataio.robot_hash(twolink) == dataio.robot_hash(twolink)
        assert len(dataio.robot_hash(twolink)) == 16

    def test_layout_hash_sensitive(self, small_layout, layout_2d,
                                   speed_layout):
        a = dataio.layout_hash(small_layout, speed_layout)
        b = dataio.layout_hash(layout_2d, speed_layout)
        assert a != b


class TestDatasetRoundtrip:
    @pytest.fixture(scope="class")
    @staticmethod
    def records(request):
        twolink = request.getfixturevalue("twolink")
        spec = DatasetSpec(count=40, seed=3)
        return spec, dataio.generate_dataset(twolink, spec)

    def test_generation_deterministic(self, twolink):
        spec = DatasetSpec(count=10, seed=5)
        a = dataio.generate_dataset(twolink, spec)
        b = dataio.generate_dataset(twolink, spec)
        for (sa, wa, _), (sb, wb, _) in zip(a, b):
            assert np.array_equal(sa.q, sb.q)
            assert wa == wb

    def test_save_load_roundtrip(self, tmp_path, twolink, layout_2d,
                                 speed_layout, records):
        spec, recs = records
        path = tmp_path / "ds.jsonl"
        dataio.save_dataset(path, recs, twolink, layout_2d, speed_layout,
                            spec)
        header, loaded = dataio.load_dataset(path, twolink, layout_2d,
                                             speed_layout)
        assert header["count"] == 40
        for (s0, w0, t0), (s1, w1, t1) in zip(recs, loaded):
            assert np.array_equal(s0.q, s1.q)
            assert np.array_equal(s0.qd, s1.qd)
            assert w0 == w1
            assert np.array_equal(t0.total, t1.total)

    def test_wrong_robot_rejected(self, tmp_path, twolink, pendulum,
                                  layout_2d, speed_layout, small_layout,
                                  records):
        spec, recs = records
        path = tmp_path / "ds.jsonl"
        dataio.save_dataset(path, recs, twolink, layout_2d, speed_layout,
                            spec)
        with pytest.raises(dataio.HashMismatchError, match="robot"):
            dataio.load_dataset(path, pendulum, small_layout, speed_layout)

    def test_tampered_targets_rejected(self, tmp_path, twolink, layout_2d,
                                       speed_layout, records):
        spec, recs = records
        path = tmp_path / "ds.jsonl"
        dataio.save_dataset(path, recs, twolink, layout_2d, speed_layout,
                            spec)
        lines = path.read_text().splitlines()
        rec = json.loads(lines[1])
        rec["targets"]["total"][0] += 1.0
        lines[1] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(dataio.HashMismatchError, match="regenerate"):
            dataio.load_dataset(path, twolink, layout_2d, speed_layout)

    def test_load_without_model_skips_checks(self, tmp_path, twolink,
                                             layout_2d, speed_layout,
                                             records):
        spec, recs = records
        path = tmp_path / "ds.jsonl"
        dataio.save_dataset(path, recs, twolink, layout_2d, speed_layout,
                            spec)
        header, loaded = dataio.load_dataset(path)
        assert len(loaded) == 40


class TestWeightsRoundtrip:
    def test_trained_weights_roundtrip(self, tmp_path, twolink, layout_2d,
                                       speed_layout):
        spec = DatasetSpec(count=60, seed=2)
        recs = dataio.generate_dataset(twolink, spec, layout_2d)
        tuples = dataio.prepare_training_tuples(recs, layout_2d, speed_layout)
        zones = build_microzones(twolink, layout_2d, speed_layout)
        train(zones, tuples, TrainingConfig(rate=0.4, epochs=2),
              twolink.gravity_vec)
        path = tmp_path / "w.json"
        dataio.save_weights(path, zones, twolink, layout_2d, speed_layout)
        restored = dataio.load_weights(path, twolink, layout_2d, speed_layout)
        for a, b in zip(zones, restored):
            for name in ("inertial", "coriolis", "gravity", "external"):
                for ua, ub in zip(getattr(a, name), getattr(b, name)):
                    assert np.array_equal(ua.weights, ub.weights)
            assert a.stellate_dyn.w_sp == b.stellate_dyn.w_sp
            assert np.array_equal(a.stellate_stat.w_sc, b.stellate_stat.w_sc)
            for ba, bb in zip(a.baskets, b.baskets):
                assert np.array_equal(ba.w_bc, bb.w_bc)

    def test_layout_mismatch_rejected(self, tmp_path, twolink, layout_2d,
                                      speed_layout, small_layout):
        zones = build_microzones(twolink, layout_2d, speed_layout)
        path = tmp_path / "w.json"
        dataio.save_weights(path, zones, twolink, layout_2d, speed_layout)
        other_speed = small_layout  # different 1-d layout
        with pytest.raises(dataio.HashMismatchError, match="layout"):
            dataio.load_weights(path, twolink, layout_2d, other_speed)


class TestRobotConfig:
    def write(self, tmp_path, text):
        p = tmp_path / "robot.yaml"
        p.write_text(text)
        return str(p)

    def test_valid_single_link(self, tmp_path):
        path = self.write(tmp_path, """
links:
  - {mass: 2.0, length: 1.5, com_distance: 0.75, inertia_com: 0.1}
gravity_mag: 9.0
""")
        model = build_planar_model(path)
        assert model.n == 1
        assert model.links[0].mass == 2.0
        assert model.gravity_mag == 9.0
        assert model.links[0].fric_dynamic == 0.0

    def test_negative_mass_reported_with_link(self, tmp_path):
        path = self.write(tmp_path, """
links:
  - {mass: -1.0, length: 1.0, com_distance: 0.5, inertia_com: 0.1}
""")
        with pytest.raises(ConfigError, match="link 0.*mass must be positive"):
            build_planar_model(path)

    def test_missing_field_reported(self, tmp_path):
        path = self.write(tmp_path, """
links:
  - {mass: 1.0, length: 1.0, com_distance: 0.5}
""")
        with pytest.raises(ConfigError, match="missing fields.*inertia_com"):
            build_planar_model(path)

    def test_unknown_field_reported(self, tmp_path):
        path = self.write(tmp_path, """
links:
  - {mass: 1.0, length: 1.0, com_distance: 0.5, inertia_com: 0.1,
     stiffness: 3.0}
""")
        with pytest.raises(ConfigError, match="unknown fields.*stiffness"):
            build_planar_model(path)

    def test_empty_links_rejected(self, tmp_path):
        path = self.write(tmp_path, "links: []\n")
        with pytest.raises(ConfigError, match="at least one link"):
            build_planar_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            build_planar_model(str(tmp_path / "absent.yaml"))


class TestExperimentConfig:
    def test_repo_default_config_loads(self):
        import os
        repo = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        cfg = load_experiment(os.path.join(repo, "configs/experiment.yaml"))
        assert cfg.model.n == 2
        assert cfg.position_layout.dims == 2
        assert cfg.speed_layout.dims == 1
        assert cfg.golgi.p_syn == cfg.position_layout.size
        assert cfg.dataset.count == 10000

    def test_layout_dim_mismatch_rejected(self, tmp_path):
        (tmp_path / "robot.yaml").write_text("""
links:
  - {mass: 1.0, length: 1.0, com_distance: 0.5, inertia_com: 0.1}
""")
        (tmp_path / "exp.yaml").write_text("""
robot: robot.yaml
layout:
  ranges: [[-3.14, 3.14], [-3.14, 3.14]]
speed_layout:
  ranges: [[-3.0, 3.0]]
""")
        with pytest.raises(ConfigError, match="2 dims.*1 joint"):
            load_experiment(str(tmp_path / "exp.yaml"))
