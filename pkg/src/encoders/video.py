"""Divided space-time video transformer."""

from typing import Optional

import numpy as np

from ..config import EncoderConfig
from ..errors import ConfigError
from ..numcore import DiffArray, broadcast_to, concat, linear, normalize
from .batches import VideoBatch
from .blocks import divided_block, norm
from .params import ParameterStore
from .prompts import PromptPack


class VideoEncoder:
    prefix = "backbone.video"

    def __init__(self, store: ParameterStore, cfg: EncoderConfig):
        self.store = store
        self.cfg = cfg

    def embed(self, batch: VideoBatch) -> DiffArray:
        """Patch embedding plus spatial/temporal positions, CLS prepended."""
        patches = np.asarray(batch.patches)
        n, T, N_p, _ = patches.shape
        if (T, N_p) != (self.cfg.T, self.cfg.N_p):
            raise ConfigError(
                f"video batch has T={T}, N_p={N_p}; encoder expects T={self.cfg.T}, N_p={self.cfg.N_p}",
                field="T",
            )
        p = self.prefix
        d = self.cfg.d_vid
        x = linear(DiffArray(patches), self.store[f"{p}.patch.weight"], self.store[f"{p}.patch.bias"])
        x = x + self.store[f"{p}.pos_space"]
        x = x + self.store[f"{p}.pos_time"].reshape(T, 1, d)
        cls = broadcast_to(self.store[f"{p}.cls"].reshape(1, 1, d), (n, 1, d))
        return concat([cls, x.reshape(n, T * N_p, d)], axis=1)

    def __call__(self, batch: VideoBatch, pack: Optional[PromptPack] = None) -> DiffArray:
        pack = pack or PromptPack.empty(self.cfg.L)
        pack.check(self.cfg.L)
        tokens = self.embed(batch)
        for layer in range(self.cfg.L):
            prompts = pack.video.video_prompts(layer, tokens) if pack.video is not None else None
            tokens = divided_block(tokens, prompts, pack.modes[layer], layer, self.store, self.cfg)
        cls = norm(tokens[:, 0], self.store, f"{self.prefix}.ln_f", self.cfg.ln_eps)
        return normalize(linear(cls, self.store[f"{self.prefix}.proj"]))
