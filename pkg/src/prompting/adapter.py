"""Linear maps between a modality's feature space and the prompt latent space."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import structlog

from ..encoders import ParameterStore
from ..numcore import DiffArray, linear, normalize

logger = structlog.get_logger(__name__)

_ZERO_NORM = 1e-12


@dataclass
class ModalityAdapter:
    """Encoder ``h`` [d_in, d_f] and decoder ``g`` [d_f, d_out], no biases."""

    modality: str
    h: DiffArray
    g: DiffArray

    @staticmethod
    def shapes(modality: str, width: int, d_f: int) -> Dict[str, Tuple[int, ...]]:
        return {f"adapter.{modality}.h": (width, d_f), f"adapter.{modality}.g": (d_f, width)}

    @classmethod
    def from_store(cls, store: ParameterStore, modality: str) -> "ModalityAdapter":
        return cls(modality, store[f"adapter.{modality}.h"], store[f"adapter.{modality}.g"])

    @property
    def d_in(self) -> int:
        return self.h.shape[0]

    @property
    def d_f(self) -> int:
        return self.h.shape[1]

    @property
    def d_out(self) -> int:
        return self.g.shape[1]


def project(z: DiffArray, adapter: ModalityAdapter) -> DiffArray:
    """h(z) scaled to unit norm along the last axis."""
    hz = linear(z, adapter.h)
    norms = np.linalg.norm(hz.values, axis=-1)
    if np.any(norms < _ZERO_NORM):
        logger.warning(
            "zero-norm projection input", modality=adapter.modality, rows=int(np.sum(norms < _ZERO_NORM))
        )
    return normalize(hz, eps=_ZERO_NORM)
