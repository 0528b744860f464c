"""Run-config schema validation tests."""

import pytest

from xbar_bench.config import (
    DEFAULT_SIGMAS,
    DeviceTemplate,
    RunConfig,
    SweepConfig,
    config_from_mapping,
    load_config,
)
from xbar_bench.errors import ConfigError


def write_yaml(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    def test_default_runconfig(self):
        cfg = RunConfig()
        assert cfg.networks == (
            "cnn_aps",
            "cnn_fused",
            "mlp_aps",
            "mlp_emg_a",
            "mlp_emg_b",
            "mlp_fused",
        )
        assert cfg.sweep.sigmas == DEFAULT_SIGMAS
        assert cfg.sweep.seeds == tuple(range(10))
        assert cfg.device.n_states == 256
        assert cfg.cost.v_read == 0.3
        assert cfg.fixed_point.word_length == 16

    def test_empty_mapping_is_all_defaults(self):
        cfg = config_from_mapping({})
        assert cfg.train.epochs == 40
        assert cfg.train.learning_rate == 0.1


class TestYamlLoading:
    def test_valid_file(self, tmp_path):
        path = write_yaml(
            tmp_path,
            """
networks: [mlp_emg_b, cnn_aps]
out_dir: runs/demo
data:
  n_per_class_session: 8
train:
  epochs: 5
sweep:
  sigmas: [0, 200]
  seeds: [0, 1]
  adc_bits: null
device:
  n_states: unbounded
""",
        )
        cfg = load_config(path)
        assert cfg.networks == ("mlp_emg_b", "cnn_aps")
        assert cfg.data.n_per_class_session == 8
        assert cfg.train.epochs == 5
        assert cfg.train.batch_size == 32  # untouched default survives
        assert cfg.sweep.sigmas == (0.0, 200.0)
        assert cfg.sweep.adc_bits is None
        assert cfg.device.n_states == "unbounded"
        assert cfg.device.instantiate(0.0, 0).n_states is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_unparseable_yaml(self, tmp_path):
        path = write_yaml(tmp_path, "networks: [unclosed")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(path)

    def test_empty_file_is_defaults(self, tmp_path):
        cfg = load_config(write_yaml(tmp_path, ""))
        assert cfg.out_dir == "runs/out"


class TestUnknownKeys:
    def test_top_level_rejected(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            config_from_mapping({"nets": ["mlp_emg_b"]})

    @pytest.mark.parametrize(
        "section,key",
        [
            ("data", "num_samples"),
            ("train", "lr"),
            ("device", "sigma"),  # sigma is per-trial, not template
            ("sweep", "sigma_grid"),
            ("cost", "vread"),
            ("fixed_point", "wl"),
        ],
    )
    def test_nested_rejected(self, section, key):
        with pytest.raises(ConfigError, match=key):
            config_from_mapping({section: {key: 1}})

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            config_from_mapping({"train": [1, 2]})


class TestPhysicalValidation:
    def test_negative_power_rejected(self):
        with pytest.raises(ConfigError, match="cost"):
            config_from_mapping({"cost": {"p_adc": -2e-4}})

    def test_fraction_not_below_word_rejected(self):
        with pytest.raises(ConfigError, match="fixed_point"):
            config_from_mapping(
                {"fixed_point": {"word_length": 8, "fraction_length": 8}}
            )

    def test_negative_learning_rate_rejected(self):
        with pytest.raises(ConfigError, match="train"):
            config_from_mapping({"train": {"learning_rate": -0.1}})

    def test_bad_device_resistances_rejected(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"device": {"r_on_mean": -5}})

    def test_bad_template_fails_at_construction(self):
        with pytest.raises(ConfigError):
            DeviceTemplate(r_on_mean=2500.0, r_off_mean=100.0)


class TestSelectionValidation:
    def test_unknown_network(self):
        with pytest.raises(ConfigError, match="resnet"):
            config_from_mapping({"networks": ["resnet"]})

    def test_empty_networks(self):
        with pytest.raises(ConfigError, match="non-empty"):
            config_from_mapping({"networks": []})

    def test_duplicate_networks(self):
        with pytest.raises(ConfigError, match="distinct"):
            config_from_mapping({"networks": ["mlp_emg_b", "mlp_emg_b"]})

    def test_empty_sigmas(self):
        with pytest.raises(ConfigError):
            SweepConfig(sigmas=())

    def test_duplicate_seeds(self):
        with pytest.raises(ConfigError):
            SweepConfig(seeds=(1, 1))

    def test_negative_sigma(self):
        with pytest.raises(ConfigError):
            SweepConfig(sigmas=(-1.0,))
