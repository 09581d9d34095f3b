"""Assemble a model for a run and convert it to and from checkpoints."""

from typing import Optional, Tuple

import numpy as np
import structlog

from ..config import ModelConfig, build_config
from ..encoders import Checkpoint, DualEncoder
from ..errors import ConfigError
from ..numcore import Rng
from ..prompting import COUNTS_NAME, PromptingMethod

logger = structlog.get_logger(__name__)


def build_model(cfg: ModelConfig, init: Optional[Checkpoint] = None) -> Tuple[DualEncoder, PromptingMethod]:
    """Backbone plus the method's parameters, optionally overwritten from ``init``.

    Every backbone parameter must come from ``init`` when one is given;
    prompting parameters are taken from it when present.
    """
    rng = Rng(cfg.train.seed)
    model = DualEncoder.initialize(cfg.encoder, rng)
    method = PromptingMethod.attach(cfg, model.store, rng.child("prompting"))
    if init is not None:
        saved = build_config(init.config)
        if saved.encoder != cfg.encoder:
            raise ConfigError("checkpoint encoder shape differs from the run config", field="encoder")
        loaded = set(model.store.load_state_dict(init.arrays, strict=False))
        missing = [n for n in model.store.names("backbone.") if n not in loaded]
        if missing:
            raise ConfigError(f"checkpoint lacks {len(missing)} backbone parameters", field=missing[0])
        if method.basis is not None and COUNTS_NAME in init.arrays:
            method.basis.counts[:] = np.asarray(init.arrays[COUNTS_NAME], dtype=np.int64)
        logger.info("parameters restored", loaded=len(loaded))
    return model, method


def to_checkpoint(cfg: ModelConfig, model: DualEncoder, method: PromptingMethod) -> Checkpoint:
    arrays = model.store.state_dict()
    if method.basis is not None:
        arrays[COUNTS_NAME] = method.basis.counts.astype(np.float64)
    return Checkpoint(config=cfg.dump(), arrays=arrays)
