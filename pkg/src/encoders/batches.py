"""Minibatch containers fed to the encoders."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError

PAD, SOS, EOS = 0, 1, 2


@dataclass
class TextBatch:
    """Token ids laid out as (SOS, words..., EOS, PAD...)."""

    token_ids: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])

    def take(self, indices: Sequence[int]) -> "TextBatch":
        idx = np.asarray(indices, dtype=np.int64)
        return TextBatch(self.token_ids[idx], self.lengths[idx])


@dataclass
class VideoBatch:
    """Patch features [n, T, N_p, patch_dim] plus optional multi-hot labels [n, C]."""

    patches: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.patches.shape[0])

    @property
    def frames(self) -> int:
        return int(self.patches.shape[1])

    def take(self, indices: Sequence[int]) -> "VideoBatch":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return VideoBatch(self.patches[idx], labels)

    def subsample_frames(self, T: int) -> "VideoBatch":
        """Keep ``T`` frames at a uniform stride."""
        if T > self.frames or T < 1:
            raise ConfigError(f"cannot take {T} frames from clips of {self.frames}", field="T")
        if T == self.frames:
            return self
        keep = (np.arange(T) * self.frames) // T
        return VideoBatch(self.patches[:, keep], self.labels)


def encode_tokens(sequences: Sequence[Sequence[int]], N_w: int) -> TextBatch:
    """Wrap word-id lists with SOS/EOS and pad them to ``N_w + 2``."""
    ids = np.full((len(sequences), N_w + 2), PAD, dtype=np.int64)
    lengths = np.zeros(len(sequences), dtype=np.int64)
    for i, words in enumerate(sequences):
        if len(words) > N_w:
            raise ConfigError(f"caption of {len(words)} words exceeds N_w={N_w}", field="N_w")
        ids[i, 0] = SOS
        ids[i, 1 : 1 + len(words)] = words
        ids[i, 1 + len(words)] = EOS
        lengths[i] = len(words)
    return TextBatch(ids, lengths)
