"""Analytic parameter counts per method; nothing is allocated."""

from typing import Dict, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from ..config import Method, ModelConfig
from ..encoders import backbone_shapes, is_bias, param_group
from .methods import is_trainable, method_shapes, parse_method


class ParamBreakdown(BaseModel):
    method: str
    trainable: int
    frozen: int
    total: int
    fraction: float = Field(description="trainable / total")
    trainable_weights: int = Field(description="Trainable parameters excluding biases")
    groups: Dict[str, int] = Field(default_factory=dict)
    trainable_groups: Dict[str, int] = Field(default_factory=dict)
    trainable_group_weights: Dict[str, int] = Field(default_factory=dict)


def ego_vpa_video_weights(d_f: int, B: int, d_vid: int) -> int:
    """Basis plus the video encoder/decoder pair."""
    return d_f * (B + 2 * d_vid)


def cmm_weights(M_v: int, T: int, d_vid: int) -> int:
    """Bidirectional LSTM plus per-frame heads, biases excluded."""
    return (16 + 2 * M_v * T) * d_vid ** 2


def count_params(cfg: ModelConfig, method: Optional[Union[Method, str]] = None) -> ParamBreakdown:
    method = parse_method(method if method is not None else cfg.method)
    shapes = dict(backbone_shapes(cfg.encoder))
    shapes.update(method_shapes(cfg, method))

    groups: Dict[str, int] = {}
    trainable_groups: Dict[str, int] = {}
    trainable_weights: Dict[str, int] = {}
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        group = param_group(name)
        groups[group] = groups.get(group, 0) + size
        if is_trainable(method, name):
            trainable_groups[group] = trainable_groups.get(group, 0) + size
            if not is_bias(name):
                trainable_weights[group] = trainable_weights.get(group, 0) + size

    total = sum(groups.values())
    trainable = sum(trainable_groups.values())
    return ParamBreakdown(
        method=method.value,
        trainable=trainable,
        frozen=total - trainable,
        total=total,
        fraction=trainable / total if total else 0.0,
        trainable_weights=sum(trainable_weights.values()),
        groups=groups,
        trainable_groups=trainable_groups,
        trainable_group_weights=trainable_weights,
    )
