"""Epoch-level schedules for the sampling mixture weight and the learning rate."""

import math

from ..config import TrainConfig


def gamma_at(epoch: int, total_epochs: int, ramp_fraction: float = 0.5) -> float:
    """0 at the first epoch, rising linearly to 1 after ``ramp_fraction`` of training."""
    ramp = ramp_fraction * total_epochs
    if ramp <= 0:
        return 1.0
    return float(min(1.0, max(0.0, epoch / ramp)))


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    if cfg.lr_schedule == "cosine" and cfg.epochs > 0:
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
    return cfg.lr
