import pytest
import yaml

from src.config import (
    Method,
    ModelConfig,
    PromptConfig,
    Settings,
    build_config,
    deep_merge,
    load_config,
    load_yaml,
    with_overrides,
)
from src.errors import ConfigError


def write(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestModelConfig:
    def test_defaults_are_consistent(self):
        cfg = ModelConfig()
        assert cfg.method is Method.EGO_VPA
        assert cfg.prompting.top_k == cfg.prompting.M_v

    def test_explicit_k(self):
        assert PromptConfig(k=2).top_k == 2

    def test_no_video_prompts_skips_the_k_range(self):
        assert PromptConfig(M_v=0, M_t=0).top_k == 0
        with pytest.raises(ValueError):
            PromptConfig(M_v=0, k=0)
        with pytest.raises(ValueError):
            PromptConfig(M_v=2, k=11)

    def test_boundary_beyond_depth(self):
        with pytest.raises(ConfigError) as info:
            build_config({"encoder": {"L": 2}, "prompting": {"K": 3}})
        assert "K=3" in info.value.message

    def test_pretraining_needs_full_method(self):
        with pytest.raises(ConfigError):
            build_config({"train": {"phase": "pretrain", "method": "vop"}})

    def test_invalid_field_is_named(self):
        with pytest.raises(ConfigError) as info:
            build_config({"loss": {"tau": -1.0}})
        assert info.value.context["field"] == "loss.tau"
        assert "loss.tau" in info.value.message

    def test_lambda_alias_round_trips(self):
        cfg = build_config({"loss": {"lambda": 0.25}})
        assert cfg.loss.lam == 0.25
        assert cfg.dump()["loss"]["lambda"] == 0.25

    def test_data_compatibility(self, tiny_data_config):
        cfg = ModelConfig()
        cfg.check_data(tiny_data_config)
        with pytest.raises(ConfigError):
            cfg.check_data(tiny_data_config.model_copy(update={"patch_dim": 8}))
        with pytest.raises(ConfigError):
            with_overrides(cfg, {"encoder": {"T": 8}}).check_data(tiny_data_config)


class TestYaml:
    def test_include_is_merged_under_the_file(self, tmp_path):
        write(tmp_path / "base.yaml", {"prompting": {"B": 6, "M_v": 2}, "train": {"epochs": 3}})
        path = write(tmp_path / "run.yaml", {"include": ["base.yaml"], "prompting": {"B": 8}})
        cfg = load_config(path)
        assert cfg.prompting.B == 8
        assert cfg.prompting.M_v == 2
        assert cfg.train.epochs == 3

    def test_include_cycle(self, tmp_path):
        write(tmp_path / "a.yaml", {"include": ["b.yaml"]})
        write(tmp_path / "b.yaml", {"include": ["a.yaml"]})
        with pytest.raises(ConfigError) as info:
            load_yaml(tmp_path / "a.yaml")
        assert "cycle" in info.value.message

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_non_mapping(self, tmp_path):
        (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_yaml(tmp_path / "list.yaml")

    def test_no_path_gives_defaults(self):
        assert load_config(None) == ModelConfig()


class TestMerging:
    def test_deep_merge_keeps_siblings(self):
        merged = deep_merge({"a": {"x": 1, "y": 2}, "b": 1}, {"a": {"y": 3}})
        assert merged == {"a": {"x": 1, "y": 3}, "b": 1}

    def test_overrides_revalidate(self):
        cfg = with_overrides(ModelConfig(), {"train": {"method": "vop-c"}})
        assert cfg.method is Method.VOP_C
        with pytest.raises(ConfigError):
            with_overrides(cfg, {"train": {"batch_size": 1}})


class TestSettings:
    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("ABLATION_WORKERS", "3")
        settings = Settings()
        assert settings.log_level == "DEBUG"
        assert settings.ablation_workers == 3

    def test_every_field_is_consumed(self):
        assert set(Settings.model_fields) == {
            "log_level", "log_format", "output_root", "default_seed", "ablation_workers",
        }
