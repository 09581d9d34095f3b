"""Boolean attention masks. True means the query may attend the key."""

from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from ..errors import ConfigError


class AttentionMode(str, Enum):
    INTRA = "intra"
    INTER = "inter"
    NONE = "none"


def _frozen(mask: np.ndarray) -> np.ndarray:
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=256)
def build_mask(mode: AttentionMode, T: int, N_p: int, M_v: int, groups: Optional[int] = None) -> np.ndarray:
    """Spatial-attention mask over (CLS, prompts, frame-major patches).

    Prompts come in ``groups`` sets of ``M_v`` (``T`` frame-specific sets by
    default, 1 for frame-shared prompts). Intra: patch (f,p) sees CLS, the
    prompts of frame f and the patches of frame f. Inter: the same but with
    every prompt set. CLS sees everything; prompt rows see only themselves.
    """
    mode = AttentionMode(mode)
    groups = T if groups is None else groups
    if mode is AttentionMode.NONE:
        M_v = 0
    if mode is AttentionMode.INTRA and M_v and groups != T:
        raise ConfigError(f"intra-frame attention needs {T} prompt sets, got {groups}", field="mode")
    n_prompts = groups * M_v
    n = 1 + n_prompts + T * N_p
    mask = np.zeros((n, n), dtype=bool)
    mask[0, :] = True
    idx = np.arange(1, 1 + n_prompts)
    mask[idx, idx] = True
    for f in range(T):
        rows = slice(1 + n_prompts + f * N_p, 1 + n_prompts + (f + 1) * N_p)
        mask[rows, 0] = True
        mask[rows, rows] = True
        if n_prompts == 0:
            continue
        if mode is AttentionMode.INTRA:
            mask[rows, 1 + f * M_v : 1 + (f + 1) * M_v] = True
        else:
            mask[rows, 1 : 1 + n_prompts] = True
    return _frozen(mask)


@lru_cache(maxsize=64)
def temporal_mask(T: int, N_p: int) -> np.ndarray:
    """Patch (f,p) sees CLS and (f',p) for every frame f'; CLS sees itself."""
    n = 1 + T * N_p
    mask = np.zeros((n, n), dtype=bool)
    mask[0, 0] = True
    for p in range(N_p):
        same_location = 1 + np.arange(T) * N_p + p
        mask[np.ix_(same_location, same_location)] = True
        mask[same_location, 0] = True
    return _frozen(mask)


def padding_mask(lengths: np.ndarray, seq_len: int, n_prompts: int) -> np.ndarray:
    """[n, seq, seq] mask hiding the keys after each caption's EOS."""
    lengths = np.asarray(lengths)
    last = 1 + n_prompts + lengths  # EOS position
    visible = np.arange(seq_len)[None, :] <= last[:, None]
    return np.broadcast_to(visible[:, None, :], (len(lengths), seq_len, seq_len))
