"""Reconstruction, orthogonality and the cross-modal synthesis loss."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ContractError
from ..numcore import DiffArray, concat, l2_norm, matmul
from .basis import PromptBasis
from .selection import SubspaceSelection


@dataclass
class SynthesisQuery:
    """One synthesis call traced during a forward pass."""

    modality: str
    layer: int
    hz: DiffArray
    selection: SubspaceSelection


def reconstruct(selection: SubspaceSelection, basis: PromptBasis) -> DiffArray:
    """sum_i alpha_i f_{S_i}, shaped like the query."""
    rows = basis.F[selection.indices]
    return (selection.alpha.reshape(selection.alpha.shape + (1,)) * rows).sum(axis=-2)


def recon_loss(hz: DiffArray, selection: SubspaceSelection, basis: PromptBasis) -> DiffArray:
    """Unsquared L2 residual per query."""
    return l2_norm(reconstruct(selection, basis) - hz, axis=-1)


def orth_penalty(basis: PromptBasis, variant: str = "squared") -> DiffArray:
    """Off-diagonal sum of F F^T, or of its squares."""
    gram = matmul(basis.F, basis.F.T)
    off = gram * (1.0 - np.eye(basis.B))
    if variant == "squared":
        off = off * off
    return off.sum()


def _per_item(queries: Sequence[SynthesisQuery], basis: PromptBasis) -> DiffArray:
    """Mean over layers of the per-query residuals, summed over frames: [n]."""
    stacked = [recon_loss(q.hz, q.selection, basis) for q in queries]
    per_layer = concat([r.reshape((1,) + r.shape) for r in stacked], axis=0).mean(axis=0)
    return per_layer.sum(axis=-1) if per_layer.ndim == 2 else per_layer


def syn_loss(
    video: Sequence[SynthesisQuery],
    text: Sequence[SynthesisQuery],
    basis: PromptBasis,
    orth_variant: str = "squared",
    orth_constraint: bool = True,
) -> DiffArray:
    """Batch mean of: frame residuals + caption residual + orthogonality term.

    Video queries are [n, T, d_f] and text queries [n, d_f]. A modality
    synthesized at several layers contributes the mean over those layers.
    """
    if not video and not text:
        raise ContractError("synthesis loss needs at least one traced query")
    terms = []
    if video:
        terms.append(_per_item(video, basis))
    if text:
        terms.append(_per_item(text, basis))
    per_item = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    loss = per_item.mean()
    if orth_constraint:
        loss = loss + orth_penalty(basis, orth_variant)
    return loss
