"""The dual encoder: both towers over one parameter store."""

from dataclasses import dataclass
from typing import Optional

import structlog

from ..config import EncoderConfig
from ..numcore import DiffArray, Rng
from .batches import TextBatch, VideoBatch
from .params import ParameterStore, backbone_shapes
from .prompts import PromptPack
from .text import TextEncoder
from .video import VideoEncoder

logger = structlog.get_logger(__name__)


@dataclass
class DualEncoder:
    config: EncoderConfig
    store: ParameterStore
    text: TextEncoder
    video: VideoEncoder

    @classmethod
    def initialize(cls, config: EncoderConfig, rng: Rng, store: Optional[ParameterStore] = None) -> "DualEncoder":
        """Create the backbone at random initialization inside ``store``."""
        store = store if store is not None else ParameterStore()
        store.create(backbone_shapes(config), rng.child("backbone"))
        logger.debug("backbone initialized", parameters=store.count(store.names("backbone.")))
        return cls(config, store, TextEncoder(store, config), VideoEncoder(store, config))

    def encode_text(self, batch: TextBatch, pack: Optional[PromptPack] = None) -> DiffArray:
        return self.text(batch, pack.text if pack is not None else None)

    def encode_video(self, batch: VideoBatch, pack: Optional[PromptPack] = None) -> DiffArray:
        return self.video(batch, pack)
