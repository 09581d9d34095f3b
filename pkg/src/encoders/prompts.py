"""Where prompts enter the encoders.

A method supplies a video source and a text source. The encoders ask each
source for the prompts of a layer, handing over the states entering that
layer, so static, generated and synthesized prompts share one entry point.
"""

from dataclasses import dataclass
from typing import Optional, Protocol, Tuple

from ..errors import ConfigError
from ..numcore import DiffArray
from .masks import AttentionMode


class VideoPromptSource(Protocol):
    def video_prompts(self, layer: int, tokens: DiffArray) -> Optional[DiffArray]:
        """Prompts [n, G, M, d] or [G, M, d] for ``layer``, or None."""


class TextPromptSource(Protocol):
    def text_prompts(self, layer: int, eos_state: DiffArray) -> Optional[DiffArray]:
        """Prompts [n, M, d] or [M, d] for ``layer``, or None."""


@dataclass
class PromptPack:
    modes: Tuple[AttentionMode, ...]
    video: Optional[VideoPromptSource] = None
    text: Optional[TextPromptSource] = None

    @classmethod
    def empty(cls, L: int) -> "PromptPack":
        return cls(modes=(AttentionMode.NONE,) * L)

    @classmethod
    def with_boundary(cls, L: int, K: int, **sources) -> "PromptPack":
        """Intra-frame attention on layers 0..K-1, inter-frame on the rest."""
        modes = tuple(AttentionMode.INTRA if layer < K else AttentionMode.INTER for layer in range(L))
        return cls(modes=modes, **sources)

    @classmethod
    def uniform(cls, L: int, mode: AttentionMode, **sources) -> "PromptPack":
        return cls(modes=(AttentionMode(mode),) * L, **sources)

    def check(self, L: int) -> None:
        if len(self.modes) != L:
            raise ConfigError(
                f"prompt pack layer count mismatch: {len(self.modes)} modes for {L} layers", field="L"
            )
