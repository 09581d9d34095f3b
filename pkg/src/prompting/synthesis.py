"""Prompt synthesis from the shared basis, as prompt sources for the encoders."""

from typing import Callable, List, Optional

from ..numcore import DiffArray, linear
from ..encoders import frame_context
from .adapter import ModalityAdapter, project
from .basis import PromptBasis
from .losses import SynthesisQuery
from .selection import SubspaceSelection

Selector = Callable[[DiffArray], SubspaceSelection]


def synthesize(selection: SubspaceSelection, basis: PromptBasis, adapter: ModalityAdapter) -> DiffArray:
    """g applied to each selected basis row: [..., k, d_out]."""
    return linear(basis.F[selection.indices], adapter.g)


class VideoSynthesizer:
    """Frame-specific prompts from each frame's context, at every layer."""

    def __init__(self, basis: PromptBasis, adapter: ModalityAdapter, select: Selector, T: int, N_p: int):
        self.basis = basis
        self.adapter = adapter
        self.select = select
        self.T = T
        self.N_p = N_p
        self.queries: List[SynthesisQuery] = []

    def video_prompts(self, layer: int, tokens: DiffArray) -> Optional[DiffArray]:
        hz = project(frame_context(tokens, self.T, self.N_p), self.adapter)
        selection = self.select(hz)
        self.queries.append(SynthesisQuery("video", layer, hz, selection))
        return synthesize(selection, self.basis, self.adapter)


class TextSynthesizer:
    """Caption prompts from the EOS state entering the synthesizing layer.

    Synthesizes at the input layer only unless ``per_layer`` is set.
    """

    def __init__(self, basis: PromptBasis, adapter: ModalityAdapter, select: Selector, per_layer: bool = False):
        self.basis = basis
        self.adapter = adapter
        self.select = select
        self.per_layer = per_layer
        self.queries: List[SynthesisQuery] = []

    def text_prompts(self, layer: int, eos_state: DiffArray) -> Optional[DiffArray]:
        if layer > 0 and not self.per_layer:
            return None
        hz = project(eos_state, self.adapter)
        selection = self.select(hz)
        self.queries.append(SynthesisQuery("text", layer, hz, selection))
        return synthesize(selection, self.basis, self.adapter)
