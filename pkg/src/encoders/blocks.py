"""Pre-norm transformer blocks over named parameters."""

from typing import Optional

import numpy as np

from ..config import EncoderConfig
from ..numcore import AttentionWeights, DiffArray, broadcast_to, concat, gelu, layer_norm, linear, masked_attention
from .masks import AttentionMode, build_mask, temporal_mask
from .params import ParameterStore


def norm(x: DiffArray, store: ParameterStore, prefix: str, eps: float) -> DiffArray:
    return layer_norm(x, store[f"{prefix}.gain"], store[f"{prefix}.bias"], eps)


def attend(q: DiffArray, kv: DiffArray, mask: np.ndarray, heads: int, store: ParameterStore, prefix: str) -> DiffArray:
    weights = AttentionWeights(
        *(store[f"{prefix}.{proj}.{kind}"] for proj in ("q", "k", "v") for kind in ("weight", "bias"))
    )
    out = masked_attention(q, kv, mask, heads, weights)
    return linear(out, store[f"{prefix}.o.weight"], store[f"{prefix}.o.bias"])


def mlp(x: DiffArray, store: ParameterStore, prefix: str) -> DiffArray:
    hidden = gelu(linear(x, store[f"{prefix}.fc1.weight"], store[f"{prefix}.fc1.bias"]))
    return linear(hidden, store[f"{prefix}.fc2.weight"], store[f"{prefix}.fc2.bias"])


def transformer_block(
    x: DiffArray, mask: np.ndarray, store: ParameterStore, prefix: str, cfg: EncoderConfig
) -> DiffArray:
    h = norm(x, store, f"{prefix}.ln1", cfg.ln_eps)
    x = x + attend(h, h, mask, cfg.heads, store, f"{prefix}.attn")
    return x + mlp(norm(x, store, f"{prefix}.ln2", cfg.ln_eps), store, f"{prefix}.mlp")


def frame_context(tokens: DiffArray, T: int, N_p: int) -> DiffArray:
    """Per-frame mean of the patch states: [n, 1+T*N_p, d] -> [n, T, d]."""
    n, _, d = tokens.shape
    return tokens[:, 1:].reshape(n, T, N_p, d).mean(axis=2)


def divided_block(
    tokens: DiffArray,
    prompts: Optional[DiffArray],
    mode: AttentionMode,
    layer: int,
    store: ParameterStore,
    cfg: EncoderConfig,
) -> DiffArray:
    """Temporal attention, prompted spatial attention, then the MLP.

    ``tokens`` is [n, 1+T*N_p, d] with CLS first and frame-major patches.
    ``prompts`` is [n, G, M, d] (or [G, M, d], shared by the batch); they join
    the normalized spatial sequence as extra keys and values and carry no
    residual state of their own.
    """
    prefix = f"backbone.video.l{layer}"
    n, _, d = tokens.shape

    h = norm(tokens, store, f"{prefix}.ln_t", cfg.ln_eps)
    tokens = tokens + attend(h, h, temporal_mask(cfg.T, cfg.N_p), cfg.heads, store, f"{prefix}.tattn")

    if prompts is None or mode is AttentionMode.NONE:
        h = norm(tokens, store, f"{prefix}.ln_s", cfg.ln_eps)
        mask = build_mask(AttentionMode.NONE, cfg.T, cfg.N_p, 0)
        tokens = tokens + attend(h, h, mask, cfg.heads, store, f"{prefix}.sattn")
    else:
        if prompts.ndim == 3:
            prompts = broadcast_to(prompts, (n,) + prompts.shape)
        _, groups, m, _ = prompts.shape
        n_prompts = groups * m
        h = norm(tokens, store, f"{prefix}.ln_s", cfg.ln_eps)
        h = concat([h[:, :1], prompts.reshape(n, n_prompts, d), h[:, 1:]], axis=1)
        mask = build_mask(AttentionMode(mode), cfg.T, cfg.N_p, m, groups)
        out = attend(h, h, mask, cfg.heads, store, f"{prefix}.sattn")
        tokens = tokens + concat([out[:, :1], out[:, 1 + n_prompts :]], axis=1)

    return tokens + mlp(norm(tokens, store, f"{prefix}.ln_m", cfg.ln_eps), store, f"{prefix}.mlp")
