"""Local subspace selection over the prompt basis.

For an orthonormal basis the least-squares coefficients of a query on any
subset S are alpha_i = hz . f_i, and the residual is |hz|^2 - sum alpha_i^2.
The best k-subset is therefore the k rows with the largest |hz . f_i|.
Every function here works on a query or on a stack of queries [..., d_f].
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..numcore import DiffArray, Rng, matmul
from .basis import PromptBasis


@dataclass
class SubspaceSelection:
    """Chosen rows ``indices`` [..., k] in selection order and their coefficients."""

    indices: np.ndarray
    alpha: DiffArray
    query_norm: np.ndarray
    B: int

    @property
    def k(self) -> int:
        return int(self.indices.shape[-1])

    @property
    def A(self) -> np.ndarray:
        """One-hot selection matrix [..., B, k]; column j encodes indices[..., j]."""
        return np.swapaxes(np.eye(self.B)[self.indices], -1, -2)


@dataclass
class SamplerState:
    gamma: float
    rng: Rng


def ranking_scores(dots: np.ndarray, rule: str = "magnitude") -> np.ndarray:
    return np.abs(dots) if rule == "magnitude" else dots


def gather_selection(hz: DiffArray, basis: PromptBasis, indices: np.ndarray) -> SubspaceSelection:
    """Coefficients of ``hz`` on the given rows; gradients reach hz and F."""
    indices = np.asarray(indices, dtype=np.int64)
    dots = matmul(hz, basis.F.T)
    if hz.ndim == 1:
        alpha = dots[indices]
    else:
        flat = dots.reshape(-1, basis.B)
        rows = np.arange(flat.shape[0])[:, None]
        alpha = flat[rows, indices.reshape(flat.shape[0], -1)].reshape(indices.shape)
    return SubspaceSelection(indices, alpha, np.linalg.norm(hz.values, axis=-1), basis.B)


def select_topk(
    hz: DiffArray, basis: PromptBasis, k: int, rule: str = "magnitude", training: bool = False
) -> SubspaceSelection:
    """The k best rows, ties going to the lowest index. Counts change only when training."""
    scores = ranking_scores(hz.values @ basis.F.values.T, rule)
    indices = np.argsort(-scores, axis=-1, kind="stable")[..., :k]
    if training:
        basis.record(indices)
    return gather_selection(hz, basis, indices)


def mixture_distribution(
    scores: np.ndarray, counts: np.ndarray, gamma: float, temperature: float = 1.0
) -> np.ndarray:
    """gamma * softmax(scores / temperature) + (1 - gamma) * inverse-frequency."""
    logits = scores / temperature
    sim = np.exp(logits - logits.max(axis=-1, keepdims=True))
    sim /= sim.sum(axis=-1, keepdims=True)
    invf = 1.0 / (counts.astype(np.float64) + 1.0)
    invf /= invf.sum()
    return gamma * sim + (1.0 - gamma) * invf


def draw_without_replacement(probs: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """k distinct indices per row of ``probs`` [R, B]: draw, zero the pick, renormalize."""
    probs = np.array(probs, dtype=np.float64, copy=True)
    R, B = probs.shape
    picks = np.empty((R, k), dtype=np.int64)
    rows = np.arange(R)
    for step in range(k):
        total = probs.sum(axis=1, keepdims=True)
        exhausted = total[:, 0] <= 0
        if np.any(exhausted):
            # mass underflowed: spread it evenly over what is left
            remaining = np.ones((int(exhausted.sum()), B))
            remaining[np.arange(remaining.shape[0])[:, None], picks[exhausted, :step]] = 0.0
            probs[exhausted] = remaining
            total = probs.sum(axis=1, keepdims=True)
        cdf = np.cumsum(probs / total, axis=1)
        u = rng.uniform((R, 1))
        choice = np.minimum((cdf <= u).sum(axis=1), B - 1)
        # never land on a zeroed entry through rounding at the top of the cdf
        while np.any(probs[rows, choice] <= 0):
            bad = probs[rows, choice] <= 0
            choice[bad] = np.argmax(probs[bad] > 0, axis=1)
        picks[:, step] = choice
        probs[rows, choice] = 0.0
    return picks


def select_sampled(
    hz: DiffArray,
    basis: PromptBasis,
    k: int,
    sampler: SamplerState,
    rule: str = "magnitude",
    temperature: float = 1.0,
    counts: Optional[np.ndarray] = None,
) -> SubspaceSelection:
    """Draw k rows from the mixture distribution; counts are updated after the draw.

    The inverse-frequency term uses the tallies as they stood when the call
    began, for every query in the stack.
    """
    scores = ranking_scores(hz.values @ basis.F.values.T, rule)
    lead = scores.shape[:-1]
    tallies = basis.counts if counts is None else counts
    probs = mixture_distribution(scores.reshape(-1, basis.B), tallies, sampler.gamma, temperature)
    indices = draw_without_replacement(probs, k, sampler.rng).reshape(lead + (k,))
    basis.record(indices)
    return gather_selection(hz, basis, indices)
