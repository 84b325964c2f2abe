import pytest
import yaml

from pibearing.config import DEFAULTS, ConfigError, ExperimentConfig
from pibearing.dataio import Label
from pibearing.model import ArchConfig


class TestDefaults:
    def test_training_defaults(self):
        cfg = ExperimentConfig.from_dict({})
        tc = cfg.train_config()
        assert (tc.lr, tc.batch_size, tc.patience, tc.max_epochs) == (1e-4, 32, 10, 100)
        assert cfg.tree["data"]["window"] == 10000 and cfg.tree["data"]["stride"] == 5000
        assert cfg.tree["eval"]["alpha"] == 0.05 and cfg.tree["eval"]["n_runs"] == 10
        assert cfg.tree["model"]["lam"] == 1.0 and cfg.tree["model"]["percentile"] == 10.0

    def test_default_arch_is_desk_model(self):
        assert ExperimentConfig.from_dict({}).arch() == ArchConfig()

    def test_synthesis_specs(self):
        specs = ExperimentConfig.from_dict({"seed": 4}).synthesis_specs()
        assert [s.label for s in specs] == list(Label)
        assert all(s.seed == 4 and s.condition.shaft_speed_rpm == 1500 for s in specs)


class TestErrors:
    def test_missing_geometry_field(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict({"model": {"geometry": {"rolling_element_count": 8}}})
        assert info.value.path == "model.geometry"

    def test_null_geometry(self):
        with pytest.raises(ConfigError, match="model.geometry"):
            ExperimentConfig.from_dict({"model": {"geometry": None}})

    def test_invalid_geometry(self):
        geom = dict(DEFAULTS["model"]["geometry"], element_diameter_mm=40.0)
        with pytest.raises(ConfigError, match="model.geometry"):
            ExperimentConfig.from_dict({"model": {"geometry": geom}})

    @pytest.mark.parametrize("override, path", [
        ({"train": {"lr": -1}}, "train.lr"),
        ({"train": {"batch_size": 2.5}}, "train.batch_size"),
        ({"data": {"ratios": [0.5, 0.5]}}, "data.ratios"),
        ({"model": {"gating": "fuzzy"}}, "model.gating"),
        ({"model": {"band": {"high_cut_hz": 40000.0}}}, "model.band"),
        ({"tl": {"strategy": "mmd"}}, "tl.strategy"),
        ({"model": {"lamda": 1}}, "model.lamda"),
        ({"data": {"synthesis": {"classes": ["ball"]}}}, "data.synthesis.classes[0]"),
        ({"model": {"condition": "KAIST"}}, "model.condition"),
    ])
    def test_field_paths(self, override, path):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict(override)
        assert info.value.path == path

    def test_bad_yaml(self, tmp_path):
        (tmp_path / "c.yaml").write_text("data: [unclosed")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "c.yaml")


class TestPersistence:
    def test_frozen_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"seed": 7, "model": {"lam": 0.2}})
        (tmp_path / "f.yaml").write_text(cfg.dump())
        back = ExperimentConfig.load(tmp_path / "f.yaml")
        assert back.tree == cfg.tree and back.digest() == cfg.digest()

    def test_override(self):
        cfg = ExperimentConfig.from_dict({})
        cfg.override("train.max_epochs", 3)
        assert cfg.train_config().max_epochs == 3
        with pytest.raises(ConfigError):
            cfg.override("train.max_epochs", -1)

    def test_dump_is_yaml(self):
        assert yaml.safe_load(ExperimentConfig.from_dict({}).dump())["seed"] == 0
