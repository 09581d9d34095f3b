"""Configuration: process settings plus the experiment hyperparameter models."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from .errors import ConfigError


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(default="json", description="json or console")
    output_root: str = Field(default="runs", description="Default root for run directories")
    default_seed: int = Field(default=0, description="Seed used when a config omits one")
    ablation_workers: int = Field(
        default=1, description="Parallel processes for ablation grid cells"
    )

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"


# Global settings instance
settings = Settings()


class Method(str, Enum):
    ZERO_SHOT = "zero-shot"
    FULL = "full"
    BIAS = "bias"
    TPT = "tpt"
    VPT = "vpt"
    VOP = "vop"
    VOP_C = "vop-c"
    VOP_FC = "vop-fc"
    EGO_VPA = "ego-vpa"


class EncoderConfig(BaseModel):
    """Dual encoder shape. Defaults are the toy scale."""

    L: int = Field(default=4, ge=1, description="Transformer layers per encoder")
    d_txt: int = Field(default=32, ge=1, description="Text width")
    d_vid: int = Field(default=48, ge=1, description="Video width")
    embed_dim: int = Field(default=32, ge=1, description="Joint embedding width")
    T: int = Field(default=4, ge=1, description="Frames per video")
    N_p: int = Field(default=4, ge=1, description="Patches per frame")
    N_w: int = Field(default=8, ge=1, description="Max words per caption")
    heads: int = Field(default=4, ge=1, description="Attention heads")
    vocab: int = Field(default=64, ge=4, description="Token vocabulary size")
    patch_dim: int = Field(default=16, ge=1, description="Raw patch feature length")
    mlp_ratio: int = Field(default=4, ge=1, description="MLP hidden width multiplier")
    ln_eps: float = Field(default=1e-5, gt=0, description="Layer-norm epsilon")

    @model_validator(mode="after")
    def _heads_divide_widths(self) -> "EncoderConfig":
        for name in ("d_txt", "d_vid"):
            if getattr(self, name) % self.heads:
                raise ValueError(f"{name}={getattr(self, name)} not divisible by heads={self.heads}")
        return self

    @classmethod
    def paper_shaped(cls) -> "EncoderConfig":
        return cls(
            L=12, d_txt=512, d_vid=768, embed_dim=256, T=16, N_p=196,
            N_w=75, heads=8, vocab=49408, patch_dim=768,
        )


class PromptConfig(BaseModel):
    """Prompt sizes and the Ego-VPA switches."""

    M_v: int = Field(default=4, ge=0, description="Video prompts per frame group")
    M_t: int = Field(default=4, ge=0, description="Text prompts")
    K: int = Field(default=3, ge=0, description="Layers using intra-frame attention")
    k: Optional[int] = Field(default=None, description="Basis prompts per query; defaults to M_v")
    B: int = Field(default=10, ge=1, description="Prompt basis size")
    d_f: int = Field(default=16, ge=1, description="Prompt latent width")
    cross_modal: bool = Field(default=True, description="Share the basis with the text side")
    orth_constraint: bool = Field(default=True, description="Add the orthogonality term")
    query_mode: str = Field(default="sampled", description="sampled or topk during training")
    selection_rule: str = Field(default="magnitude", description="magnitude or signed ranking")
    sampling_temperature: float = Field(default=0.1, gt=0, description="Softmax temperature of pi_sim")
    text_per_layer: bool = Field(default=False, description="Text prompts at every layer")
    init_std: float = Field(default=0.1, gt=0, description="Std of static prompt initialization")
    decoder_init_std: float = Field(
        default=0.01, gt=0, description="Std of the synthesized-prompt decoder initialization"
    )

    @field_validator("query_mode")
    @classmethod
    def _query_mode(cls, value: str) -> str:
        if value not in ("sampled", "topk"):
            raise ValueError("query_mode must be 'sampled' or 'topk'")
        return value

    @field_validator("selection_rule")
    @classmethod
    def _selection_rule(cls, value: str) -> str:
        if value not in ("magnitude", "signed"):
            raise ValueError("selection_rule must be 'magnitude' or 'signed'")
        return value

    @model_validator(mode="after")
    def _basis_fits(self) -> "PromptConfig":
        if self.B > self.d_f:
            raise ValueError(f"B={self.B} cannot exceed d_f={self.d_f} for an orthonormal basis")
        if self.M_v == 0 and self.k is None:
            return self
        if not 1 <= self.top_k <= self.B:
            raise ValueError(f"k={self.top_k} must lie in [1, B={self.B}]")
        return self

    @property
    def top_k(self) -> int:
        return self.k if self.k is not None else self.M_v

    @classmethod
    def paper_shaped(cls) -> "PromptConfig":
        return cls(M_v=8, M_t=8, K=8, k=8, B=10, d_f=512)


class LossConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    tau: float = Field(default=0.07, gt=0, description="Contrastive temperature")
    lam: float = Field(default=0.1, ge=0, alias="lambda", description="Weight on the synthesis loss")
    orth_variant: str = Field(default="squared", description="squared or signed off-diagonal sum")

    @field_validator("orth_variant")
    @classmethod
    def _orth_variant(cls, value: str) -> str:
        if value not in ("squared", "signed"):
            raise ValueError("orth_variant must be 'squared' or 'signed'")
        return value


class TrainConfig(BaseModel):
    method: Method = Field(default=Method.EGO_VPA, description="Adaptation method")
    phase: str = Field(default="adapt", description="pretrain or adapt")
    epochs: int = Field(default=20, ge=0)
    batch_size: int = Field(default=16, ge=2)
    lr: float = Field(default=5e-3, ge=0)
    lr_schedule: str = Field(default="constant", description="constant or cosine")
    weight_decay: float = Field(default=0.0, ge=0)
    betas: List[float] = Field(default_factory=lambda: [0.9, 0.999])
    adam_eps: float = Field(default=1e-8, gt=0)
    basis_lr_scale: float = Field(
        default=0.1, ge=0, description="Learning-rate multiplier of the prompt basis"
    )
    seed: int = Field(default=0)
    ramp_fraction: float = Field(default=0.5, gt=0, le=1, description="Share of epochs for the gamma ramp")
    data_fraction: float = Field(default=1.0, gt=0, le=1, description="Share of the training split used")
    frozen_patterns: List[str] = Field(
        default_factory=list, description="Extra glob patterns of parameters kept frozen"
    )

    @field_validator("phase")
    @classmethod
    def _phase(cls, value: str) -> str:
        if value not in ("pretrain", "adapt"):
            raise ValueError("phase must be 'pretrain' or 'adapt'")
        return value

    @field_validator("lr_schedule")
    @classmethod
    def _schedule(cls, value: str) -> str:
        if value not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        return value


class GeneratorConfig(BaseModel):
    """Synthetic paired video-text data."""

    n_concepts: int = Field(default=8, ge=1)
    n_items: int = Field(default=480, ge=0, description="Items across all splits")
    split_fractions: Dict[str, float] = Field(
        default_factory=lambda: {
            "pretrain": 0.5, "adapt_train": 0.25, "adapt_val": 0.125, "adapt_test": 0.125,
        }
    )
    T: int = Field(default=4, ge=1)
    N_p: int = Field(default=4, ge=1)
    patch_dim: int = Field(default=16, ge=1)
    vocab: int = Field(default=64, ge=4)
    N_w: int = Field(default=8, ge=1)
    domain_shift: float = Field(default=0.6, ge=0, le=1)
    noise_std: float = Field(default=0.1, ge=0)
    seed: int = Field(default=0)
    multilabel: bool = Field(default=True)
    labels_per_item: int = Field(default=2, ge=1)
    object_fraction: float = Field(default=0.5, gt=0, le=1, description="Share of patches carrying the concept")

    @field_validator("split_fractions")
    @classmethod
    def _splits(cls, value: Dict[str, float]) -> Dict[str, float]:
        expected = {"pretrain", "adapt_train", "adapt_val", "adapt_test"}
        if set(value) != expected:
            raise ValueError(f"split_fractions needs exactly {sorted(expected)}")
        if abs(sum(value.values()) - 1.0) > 1e-9 or min(value.values()) < 0:
            raise ValueError("split_fractions must be nonnegative and sum to 1")
        return value


class ModelConfig(BaseModel):
    """Every hyperparameter of one run."""

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    prompting: PromptConfig = Field(default_factory=PromptConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: GeneratorConfig = Field(default_factory=GeneratorConfig)

    @model_validator(mode="after")
    def _consistent(self) -> "ModelConfig":
        if self.prompting.K > self.encoder.L:
            raise ValueError(f"prompting.K={self.prompting.K} exceeds encoder.L={self.encoder.L}")
        if self.train.phase == "pretrain" and self.train.method is not Method.FULL:
            raise ValueError("train.method must be 'full' when train.phase is 'pretrain'")
        return self

    @property
    def method(self) -> Method:
        return self.train.method

    def check_data(self, data: GeneratorConfig) -> None:
        """Raise ConfigError when a dataset cannot feed this encoder."""
        enc = self.encoder
        pairs = {
            "N_p": (enc.N_p, data.N_p),
            "patch_dim": (enc.patch_dim, data.patch_dim),
            "vocab": (enc.vocab, data.vocab),
            "N_w": (enc.N_w, data.N_w),
        }
        for name, (mine, theirs) in pairs.items():
            if mine != theirs:
                raise ConfigError(f"encoder.{name}={mine} does not match dataset {name}={theirs}", field=name)
        if enc.T > data.T:
            raise ConfigError(f"encoder.T={enc.T} exceeds dataset T={data.T}", field="T")

    def dump(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_yaml(path: Path, _seen: Optional[Set[Path]] = None) -> Dict[str, Any]:
    """Read a YAML mapping, resolving its ``include`` list first."""
    path = Path(path).resolve()
    seen = set() if _seen is None else _seen
    if path in seen:
        raise ConfigError(f"include cycle through {path}", field="include")
    seen = seen | {path}
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="path")
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}", field="path")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a mapping", field="path")

    merged: Dict[str, Any] = {}
    for include in raw.pop("include", None) or []:
        merged = deep_merge(merged, load_yaml(path.parent / include, seen))
    return deep_merge(merged, raw)


def build_config(raw: Dict[str, Any]) -> ModelConfig:
    try:
        return ModelConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"invalid config field '{field}': {first['msg']}", field=field)


def load_config(path: Optional[Path]) -> ModelConfig:
    if path is None:
        return ModelConfig()
    return build_config(load_yaml(Path(path)))


def with_overrides(config: ModelConfig, overrides: Dict[str, Any]) -> ModelConfig:
    return build_config(deep_merge(config.dump(), overrides))
