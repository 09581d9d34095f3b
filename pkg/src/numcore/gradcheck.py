"""Central finite differences against the reverse-mode gradients."""

from typing import Callable, Optional, Sequence

import numpy as np

from .diffarray import DiffArray, backward
from .rng import Rng


def finite_diff_check(
    f: Callable[[], DiffArray],
    leaves: Sequence[DiffArray],
    step: float = 1e-5,
    floor: float = 1e-8,
    max_components: Optional[int] = None,
    rng: Optional[Rng] = None,
    by_magnitude: bool = False,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must rebuild its graph from the current leaf values on every call.
    The error of a component is |a - n| / max(|a|, |n|, floor). With
    ``max_components`` only that many components per leaf are perturbed,
    chosen at random or, with ``by_magnitude``, the ones with the largest
    analytic gradient.
    """
    for leaf in leaves:
        leaf.zero_grad()
    backward(f())
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values) for leaf in leaves]
    analytic = [np.array(a, copy=True) for a in analytic]

    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.values.reshape(-1)
        indices = np.arange(flat.size)
        flat_grad = grad.reshape(-1)
        if max_components is not None and flat.size > max_components:
            if by_magnitude:
                indices = np.sort(np.argsort(-np.abs(flat_grad), kind="stable")[:max_components])
            else:
                picker = rng or Rng(0)
                indices = np.sort(picker.generator.choice(flat.size, size=max_components, replace=False))
        for i in indices:
            original = flat[i]
            flat[i] = original + step
            plus = f().item()
            flat[i] = original - step
            minus = f().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            a = flat_grad[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    for leaf in leaves:
        leaf.zero_grad()
    return worst
