"""Losses, schedules, optimizer and the training loop."""

from .evaluation import TASKS, encode_texts, encode_videos, evaluate, fit_frames
from .losses import info_nce, total_loss
from .optimizer import AdamState, AdamW, optimizer_step
from .records import EpochLog, EpochRecord
from .schedule import gamma_at, lr_at
from .session import build_model, to_checkpoint
from .trainer import Trainer, TrainResult, minibatches, subsample

__all__ = [
    "TASKS",
    "encode_texts",
    "encode_videos",
    "evaluate",
    "fit_frames",
    "info_nce",
    "total_loss",
    "AdamState",
    "AdamW",
    "optimizer_step",
    "EpochLog",
    "EpochRecord",
    "gamma_at",
    "lr_at",
    "build_model",
    "to_checkpoint",
    "Trainer",
    "TrainResult",
    "minibatches",
    "subsample",
]
