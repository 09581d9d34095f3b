"""Per-method wiring: which parameters exist, which train, and which prompts flow where."""

from typing import Dict, List, Optional, Tuple

import structlog

from ..config import Method, ModelConfig
from ..encoders import AttentionMode, ParameterStore, PromptPack, init_values, is_bias
from ..errors import ConfigError, ContractError
from ..numcore import DiffArray, Rng
from .adapter import ModalityAdapter
from .basis import BASIS_NAME, PromptBasis
from .cmm import CMMPrompts, cmm_shapes
from .losses import syn_loss
from .selection import SamplerState, select_sampled, select_topk
from .static import StaticTextPrompts, StaticVideoPrompts, text_prompt_shapes, video_prompt_shapes
from .synthesis import TextSynthesizer, VideoSynthesizer

logger = structlog.get_logger(__name__)

Shape = Tuple[int, ...]

PROMPT_METHODS = {Method.TPT, Method.VPT, Method.VOP, Method.VOP_C, Method.VOP_FC, Method.EGO_VPA}


def parse_method(value) -> Method:
    try:
        return Method(value)
    except ValueError:
        valid = ", ".join(m.value for m in Method)
        raise ConfigError(f"unknown method '{value}' (expected one of: {valid})", field="method")


def method_shapes(cfg: ModelConfig, method: Method) -> Dict[str, Shape]:
    """Parameters a method adds on top of the backbone."""
    enc, p = cfg.encoder, cfg.prompting
    shapes: Dict[str, Shape] = {}
    if method in (Method.TPT, Method.VOP, Method.VOP_C, Method.VOP_FC):
        shapes.update(text_prompt_shapes(p.M_t, enc.d_txt))
    if method in (Method.VPT, Method.VOP):
        shapes.update(video_prompt_shapes(enc.L, p.M_v, enc.d_vid))
    if method in (Method.VOP_C, Method.VOP_FC) and p.M_v:
        shapes.update(cmm_shapes(enc.d_vid, enc.T, p.M_v))
    if method is Method.EGO_VPA:
        shapes[BASIS_NAME] = (p.B, p.d_f)
        shapes.update(ModalityAdapter.shapes("video", enc.d_vid, p.d_f))
        if p.cross_modal:
            shapes.update(ModalityAdapter.shapes("text", enc.d_txt, p.d_f))
        else:
            shapes.update(text_prompt_shapes(p.M_t, enc.d_txt))
    return shapes


def is_trainable(method: Method, name: str) -> bool:
    backbone = name.startswith("backbone.")
    if method is Method.ZERO_SHOT:
        return False
    if method is Method.FULL:
        return backbone
    if method is Method.BIAS:
        return backbone and is_bias(name)
    return not backbone


class PromptingMethod:
    """Builds the prompt pack of one method over a shared parameter store."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore, basis: Optional[PromptBasis] = None):
        self.cfg = cfg
        self.method = cfg.method
        self.store = store
        self.basis = basis
        self.trainable: List[str] = []

    @classmethod
    def attach(cls, cfg: ModelConfig, store: ParameterStore, rng: Rng) -> "PromptingMethod":
        """Create the method's parameters (skipping ones already present) and mark trainability."""
        method = cfg.method
        p = cfg.prompting
        for name, shape in method_shapes(cfg, method).items():
            if name in store or name == BASIS_NAME:
                continue
            std = None
            if name.startswith("prompts."):
                std = p.init_std
            elif name.startswith("adapter.") and name.endswith(".g"):
                std = p.decoder_init_std
            store.add(name, init_values(name, shape, rng.child(name), std))
        basis = PromptBasis.attach(store, p.B, p.d_f, rng) if method is Method.EGO_VPA else None

        instance = cls(cfg, store, basis)
        instance.trainable = store.set_trainable(lambda n: is_trainable(method, n), cfg.train.frozen_patterns)
        logger.info(
            "method attached",
            method=method.value,
            trainable=store.count(instance.trainable),
            total=store.count(),
        )
        return instance

    def _modes(self) -> Tuple[AttentionMode, ...]:
        L, K = self.cfg.encoder.L, self.cfg.prompting.K
        if self.method in (Method.VOP_FC, Method.EGO_VPA):
            return PromptPack.with_boundary(L, K).modes
        if self.method in (Method.VPT, Method.VOP, Method.VOP_C):
            return PromptPack.uniform(L, AttentionMode.INTER).modes
        return PromptPack.empty(L).modes

    def _selector(self, training: bool, sampler: Optional[SamplerState]):
        p = self.cfg.prompting
        basis, k = self.basis, p.top_k
        if not training:
            return lambda hz: select_topk(hz, basis, k, p.selection_rule, training=False)
        if p.query_mode == "topk":
            return lambda hz: select_topk(hz, basis, k, p.selection_rule, training=True)
        if sampler is None:
            raise ContractError("sampled queries need a sampler state")
        return lambda hz: select_sampled(hz, basis, k, sampler, p.selection_rule, p.sampling_temperature)

    def build_pack(self, training: bool = False, sampler: Optional[SamplerState] = None) -> PromptPack:
        """A fresh pack for one forward pass; synthesizers trace their queries into it."""
        method, enc, p = self.method, self.cfg.encoder, self.cfg.prompting
        video = text = None
        if method in (Method.TPT, Method.VOP, Method.VOP_C, Method.VOP_FC):
            text = StaticTextPrompts(self.store)
        if method in (Method.VPT, Method.VOP):
            video = StaticVideoPrompts(self.store)
        if method in (Method.VOP_C, Method.VOP_FC):
            video = CMMPrompts(self.store, enc.T, enc.N_p, p.M_v)
        if method is Method.EGO_VPA and not p.cross_modal:
            text = StaticTextPrompts(self.store)
        if method is Method.EGO_VPA and p.top_k > 0:
            select = self._selector(training, sampler)
            video = VideoSynthesizer(
                self.basis, ModalityAdapter.from_store(self.store, "video"), select, enc.T, enc.N_p
            )
            if p.cross_modal:
                text = TextSynthesizer(
                    self.basis, ModalityAdapter.from_store(self.store, "text"), select, p.text_per_layer
                )
        return PromptPack(modes=self._modes(), video=video, text=text)

    def synthesis_loss(self, pack: PromptPack) -> Optional[DiffArray]:
        """L_syn over the queries traced in ``pack``, or None for methods without synthesis."""
        if self.method is not Method.EGO_VPA:
            return None
        video = pack.video.queries if isinstance(pack.video, VideoSynthesizer) else []
        text = pack.text.queries if isinstance(pack.text, TextSynthesizer) else []
        if not video and not text:
            return None
        return syn_loss(
            video,
            text,
            self.basis,
            self.cfg.loss.orth_variant,
            self.cfg.prompting.orth_constraint,
        )
