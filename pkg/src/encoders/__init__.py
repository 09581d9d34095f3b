"""Toy dual encoder: text transformer and divided space-time video transformer."""

from .batches import EOS, PAD, SOS, TextBatch, VideoBatch, encode_tokens
from .blocks import divided_block, frame_context
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dual import DualEncoder
from .masks import AttentionMode, build_mask, padding_mask, temporal_mask
from .params import ParameterStore, backbone_shapes, init_values, is_bias, param_group
from .prompts import PromptPack, TextPromptSource, VideoPromptSource

__all__ = [
    "EOS",
    "PAD",
    "SOS",
    "TextBatch",
    "VideoBatch",
    "encode_tokens",
    "divided_block",
    "frame_context",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "DualEncoder",
    "AttentionMode",
    "build_mask",
    "padding_mask",
    "temporal_mask",
    "ParameterStore",
    "backbone_shapes",
    "init_values",
    "is_bias",
    "param_group",
    "PromptPack",
    "TextPromptSource",
    "VideoPromptSource",
]
