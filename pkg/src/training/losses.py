"""Contrastive and combined training losses."""

from typing import Optional

import numpy as np
import structlog

from ..config import LossConfig
from ..errors import DimensionError
from ..numcore import DiffArray, log_softmax, matmul

logger = structlog.get_logger(__name__)


def info_nce(v: DiffArray, t: DiffArray, tau: float) -> DiffArray:
    """Symmetric InfoNCE over matched rows of ``v`` and ``t``."""
    if v.shape != t.shape:
        raise DimensionError("info_nce", v.shape, t.shape)
    n = v.shape[0]
    if n == 1:
        logger.warning("contrastive batch of one item; loss is identically zero")
    logits = matmul(v, t.T) * (1.0 / tau)
    diag = (np.arange(n), np.arange(n))
    v2t = log_softmax(logits, axis=1)[diag]
    t2v = log_softmax(logits, axis=0)[diag]
    return -(v2t + t2v).sum() * (1.0 / n)


def total_loss(loss_cl: DiffArray, loss_syn: Optional[DiffArray], cfg: LossConfig) -> DiffArray:
    """L_cl + lambda * L_syn; just L_cl when the method has no synthesis term."""
    if loss_syn is None:
        return loss_cl
    return loss_cl + loss_syn * cfg.lam
