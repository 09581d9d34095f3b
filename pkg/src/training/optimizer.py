"""Adam with decoupled weight decay over named parameters."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from ..numcore import DiffArray


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: Dict[str, DiffArray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decays: Callable[[str], bool] = lambda name: True,
    lr_scale: Callable[[str], float] = lambda name: 1.0,
) -> None:
    """One bias-corrected Adam update, in place. Parameters without a gradient are skipped.

    ``lr_scale`` multiplies the learning rate per parameter name.
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, param in params.items():
        grad = param.grad
        if grad is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(param.values))
        v = state.v.setdefault(name, np.zeros_like(param.values))
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        step_lr = lr * lr_scale(name)
        if weight_decay and decays(name):
            param.values -= step_lr * weight_decay * param.values
        param.values -= step_lr * (m / c1) / (np.sqrt(v / c2) + eps)


class AdamW:
    def __init__(
        self,
        params: Dict[str, DiffArray],
        betas: Iterable[float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        no_decay: Callable[[str], bool] = lambda name: False,
        lr_scales: Optional[Dict[str, float]] = None,
    ):
        self.params = params
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.no_decay = no_decay
        self.lr_scales = dict(lr_scales or {})
        self.state = AdamState()

    def step(self, lr: float) -> None:
        optimizer_step(
            self.params,
            self.state,
            lr,
            self.betas,
            self.eps,
            self.weight_decay,
            lambda name: not self.no_decay(name),
            lambda name: self.lr_scales.get(name, 1.0),
        )

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()
