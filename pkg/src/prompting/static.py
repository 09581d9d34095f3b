"""Free prompt vectors learned directly: deep video prompts and input-layer text prompts."""

from typing import Dict, Optional, Tuple

from ..encoders import ParameterStore
from ..numcore import DiffArray

Shape = Tuple[int, ...]
TEXT_PROMPTS = "prompts.text"


def video_prompt_shapes(L: int, M_v: int, d_vid: int) -> Dict[str, Shape]:
    """One frame-shared group of M_v prompts per layer."""
    if M_v == 0:
        return {}
    return {f"prompts.video.l{layer}": (1, M_v, d_vid) for layer in range(L)}


def text_prompt_shapes(M_t: int, d_txt: int) -> Dict[str, Shape]:
    return {TEXT_PROMPTS: (M_t, d_txt)} if M_t else {}


class StaticVideoPrompts:
    def __init__(self, store: ParameterStore):
        self.store = store

    def video_prompts(self, layer: int, tokens: DiffArray) -> Optional[DiffArray]:
        name = f"prompts.video.l{layer}"
        return self.store[name] if name in self.store else None


class StaticTextPrompts:
    """Prompts prepended at the input layer; later layers carry their states."""

    def __init__(self, store: ParameterStore):
        self.store = store

    def text_prompts(self, layer: int, eos_state: DiffArray) -> Optional[DiffArray]:
        if layer > 0 or TEXT_PROMPTS not in self.store:
            return None
        return self.store[TEXT_PROMPTS]
