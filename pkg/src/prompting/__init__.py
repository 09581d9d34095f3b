"""Prompt basis, subspace selection, prompt synthesis and the baseline prompt generators."""

from .accounting import ParamBreakdown, cmm_weights, count_params, ego_vpa_video_weights
from .adapter import ModalityAdapter, project
from .basis import BASIS_NAME, COUNTS_NAME, PromptBasis, orthonormal_rows
from .cmm import CMMPrompts, cmm_generate, cmm_hidden, cmm_shapes
from .losses import SynthesisQuery, orth_penalty, recon_loss, reconstruct, syn_loss
from .methods import PROMPT_METHODS, PromptingMethod, is_trainable, method_shapes, parse_method
from .selection import (
    SamplerState,
    SubspaceSelection,
    draw_without_replacement,
    gather_selection,
    mixture_distribution,
    ranking_scores,
    select_sampled,
    select_topk,
)
from .static import StaticTextPrompts, StaticVideoPrompts
from .synthesis import TextSynthesizer, VideoSynthesizer, synthesize

__all__ = [
    "ParamBreakdown",
    "cmm_weights",
    "count_params",
    "ego_vpa_video_weights",
    "ModalityAdapter",
    "project",
    "BASIS_NAME",
    "COUNTS_NAME",
    "PromptBasis",
    "orthonormal_rows",
    "CMMPrompts",
    "cmm_generate",
    "cmm_hidden",
    "cmm_shapes",
    "SynthesisQuery",
    "orth_penalty",
    "recon_loss",
    "reconstruct",
    "syn_loss",
    "PROMPT_METHODS",
    "PromptingMethod",
    "is_trainable",
    "method_shapes",
    "parse_method",
    "SamplerState",
    "SubspaceSelection",
    "draw_without_replacement",
    "gather_selection",
    "mixture_distribution",
    "ranking_scores",
    "select_sampled",
    "select_topk",
    "StaticTextPrompts",
    "StaticVideoPrompts",
    "TextSynthesizer",
    "VideoSynthesizer",
    "synthesize",
]
