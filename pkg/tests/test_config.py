import json

import pytest

from terrainqd.config import ConfigError, RunConfig
from terrainqd.descriptors import PenaltyScaling


class TestValidation:
    def test_defaults_are_valid(self):
        cfg = RunConfig().validate()
        assert cfg.budget == 1000
        assert cfg.emitters == 10
        assert cfg.population == 20
        assert cfg.episodes == 20
        assert cfg.alpha == 1.0
        assert cfg.lambda_ == 2.0
        assert cfg.offset == 20.0
        assert cfg.min_f == -20.0
        assert cfg.archive_learning_rate == 0.01
        assert cfg.snapshot_interval == 50

    def test_field_named_in_errors(self):
        with pytest.raises(ConfigError, match="budget"):
            RunConfig(budget=0).validate()
        with pytest.raises(ConfigError, match="mode"):
            RunConfig(mode="spot").validate()
        with pytest.raises(ConfigError, match="archive_learning_rate"):
            RunConfig(archive_learning_rate=0.0).validate()
        with pytest.raises(ConfigError, match="external_command"):
            RunConfig(evaluator="external").validate()
        with pytest.raises(ConfigError, match="scaling"):
            RunConfig(scaling={"scale": [1.0, 2.0]}).validate()

    def test_scaling_object(self):
        assert RunConfig().scaling_object() is None
        cfg = RunConfig(scaling={"scale": [1, 2, 3, 4, 5], "collision_scale": 2.0})
        scaling = cfg.scaling_object()
        assert scaling == PenaltyScaling(scale=(1, 2, 3, 4, 5), collision_scale=2.0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig(mode="anymal", budget=7, lambda_=3.5, seed=99)
        path = tmp_path / "cfg.json"
        cfg.save(path)
        doc = json.loads(path.read_text())
        assert doc["lambda"] == 3.5
        assert "lambda_" not in doc
        assert RunConfig.from_file(path) == cfg

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"buget": 10}))
        with pytest.raises(ConfigError, match="buget"):
            RunConfig.from_file(path)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{")
        with pytest.raises(ConfigError, match="JSON"):
            RunConfig.from_file(path)

    def test_overrides_skip_none(self):
        cfg = RunConfig(budget=5).with_overrides(budget=None, seed=3)
        assert cfg.budget == 5
        assert cfg.seed == 3

    def test_resolved_pins_scaling_and_out_dir(self):
        scaling = PenaltyScaling(scale=(1.0,) * 5, collision_scale=4.0)
        cfg = RunConfig().resolved(scaling, "/tmp/somewhere")
        assert cfg.scaling == {"scale": [1.0] * 5, "collision_scale": 4.0}
        assert cfg.out_dir == "/tmp/somewhere"
        assert cfg.scaling_object() == scaling
