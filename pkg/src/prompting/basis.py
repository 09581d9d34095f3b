"""The shared prompt basis F and its selection tallies."""

from typing import Dict, Optional

import numpy as np
import structlog

from ..encoders import ParameterStore
from ..numcore import DiffArray, Rng

logger = structlog.get_logger(__name__)

BASIS_NAME = "basis.F"
COUNTS_NAME = "basis.counts"


def orthonormal_rows(B: int, d_f: int, rng: Rng) -> np.ndarray:
    """B orthonormal rows of width d_f from a Gaussian draw (Gram-Schmidt via QR)."""
    q, r = np.linalg.qr(rng.normal((d_f, B)))
    # fix the column signs so the factorization is unique
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return np.ascontiguousarray(q.T)


class PromptBasis:
    """Rows f_1..f_B of F plus how often each row was picked this epoch.

    ``F`` is the store's DiffArray itself, so video and text queries read and
    update one object.
    """

    def __init__(self, F: DiffArray, counts: Optional[np.ndarray] = None):
        self.F = F
        self.counts = np.zeros(F.shape[0], dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)

    @classmethod
    def attach(cls, store: ParameterStore, B: int, d_f: int, rng: Rng) -> "PromptBasis":
        if BASIS_NAME not in store:
            store.add(BASIS_NAME, orthonormal_rows(B, d_f, rng.child(BASIS_NAME)))
        return cls(store[BASIS_NAME])

    @property
    def B(self) -> int:
        return self.F.shape[0]

    @property
    def d_f(self) -> int:
        return self.F.shape[1]

    def record(self, indices: np.ndarray) -> None:
        np.add.at(self.counts, np.asarray(indices, dtype=np.int64).ravel(), 1)

    def reset_counts(self) -> None:
        self.counts[:] = 0

    def renormalize(self) -> None:
        """Scale rows that drifted off unit length back onto it, in place."""
        norms = np.linalg.norm(self.F.values, axis=1)
        drifted = np.abs(norms - 1.0) > 1e-12
        if drifted.any():
            self.F.values[drifted] /= np.maximum(norms[drifted], 1e-12)[:, None]

    def gram_offdiag_max(self) -> float:
        gram = self.F.values @ self.F.values.T
        np.fill_diagonal(gram, 0.0)
        return float(np.abs(gram).max()) if self.B > 1 else 0.0

    def histogram(self) -> Dict[str, int]:
        return {str(i): int(c) for i, c in enumerate(self.counts)}
