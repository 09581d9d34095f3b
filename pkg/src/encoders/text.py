"""Text transformer with text-prompt insertion after SOS."""

from typing import Optional

import numpy as np

from ..config import EncoderConfig
from ..errors import ConfigError, DataError
from ..numcore import DiffArray, broadcast_to, concat, linear, normalize
from .batches import TextBatch
from .blocks import norm, transformer_block
from .masks import padding_mask
from .params import ParameterStore
from .prompts import TextPromptSource


class TextEncoder:
    """Returns the L2-normalized, projected EOS state of each caption.

    With prompts the sequence becomes (SOS, P_t, words..., EOS, PAD...).
    A source that yields prompts at a later layer replaces the prompt
    states carried from the previous layer; one that stays silent lets
    them flow on.
    """

    prefix = "backbone.text"

    def __init__(self, store: ParameterStore, cfg: EncoderConfig):
        self.store = store
        self.cfg = cfg

    def embed(self, batch: TextBatch) -> DiffArray:
        ids = np.asarray(batch.token_ids)
        n, seq = ids.shape
        capacity = self.store[f"{self.prefix}.pos_emb"].shape[0]
        if seq > capacity:
            raise ConfigError(
                f"text sequence of {seq} tokens exceeds positional capacity {capacity}", field="N_w"
            )
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab):
            raise DataError(f"token ids must lie in [0, {self.cfg.vocab})", max_id=int(ids.max()))
        tokens = self.store[f"{self.prefix}.tok_emb"][ids]
        return tokens + self.store[f"{self.prefix}.pos_emb"][:seq]

    def __call__(self, batch: TextBatch, source: Optional[TextPromptSource] = None) -> DiffArray:
        x = self.embed(batch)
        n = x.shape[0]
        rows = np.arange(n)
        lengths = np.asarray(batch.lengths)
        m = 0
        for layer in range(self.cfg.L):
            if source is not None:
                eos_state = x[rows, lengths + 1 + m]
                prompts = source.text_prompts(layer, eos_state)
                if prompts is not None:
                    if prompts.ndim == 2:
                        prompts = broadcast_to(prompts, (n,) + prompts.shape)
                    x = concat([x[:, :1], prompts, x[:, 1 + m :]], axis=1)
                    m = prompts.shape[1]
            mask = padding_mask(lengths, x.shape[1], m)
            x = transformer_block(x, mask, self.store, f"{self.prefix}.l{layer}", self.cfg)

        eos = x[rows, lengths + 1 + m]
        eos = norm(eos, self.store, f"{self.prefix}.ln_f", self.cfg.ln_eps)
        return normalize(linear(eos, self.store[f"{self.prefix}.proj"]))
