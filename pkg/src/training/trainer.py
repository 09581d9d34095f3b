"""The adaptation (and pretraining) loop."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import structlog

from ..config import Method, ModelConfig
from ..encoders import DualEncoder, TextBatch, is_bias
from ..errors import NumericFailure
from ..numcore import Rng, backward
from ..prompting import BASIS_NAME, PromptingMethod, SamplerState
from ..synthdata import PairedSplit
from .evaluation import evaluate, fit_frames
from .losses import info_nce, total_loss
from .optimizer import AdamW
from .records import EpochLog, EpochRecord
from .schedule import gamma_at, lr_at

logger = structlog.get_logger(__name__)


@dataclass
class TrainResult:
    records: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    backbone_checksum_before: str = ""
    backbone_checksum_after: str = ""


def minibatches(n: int, batch_size: int, rng: Rng) -> List[np.ndarray]:
    """Shuffled index batches; a trailing single item joins the previous batch."""
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def subsample(split: PairedSplit, fraction: float, rng: Rng) -> PairedSplit:
    if fraction >= 1.0:
        return split
    keep = max(2, int(np.ceil(fraction * len(split))))
    return split.take(np.sort(rng.permutation(len(split))[:keep]))


class Trainer:
    def __init__(self, cfg: ModelConfig, model: DualEncoder, method: PromptingMethod):
        self.cfg = cfg
        self.model = model
        self.method = method
        self.rng = Rng(cfg.train.seed).child("trainer")
        self.sampler = SamplerState(gamma=0.0, rng=self.rng.child("sampler"))
        train = cfg.train
        self.optimizer = AdamW(
            {name: model.store[name] for name in method.trainable},
            betas=train.betas,
            eps=train.adam_eps,
            weight_decay=train.weight_decay,
            no_decay=lambda name: name == BASIS_NAME or is_bias(name),
            lr_scales={BASIS_NAME: train.basis_lr_scale},
        )

    @property
    def synthesizes(self) -> bool:
        return self.method.basis is not None

    def step(self, batch: PairedSplit, lr: float, epoch: int, step: int):
        """One forward/backward/update; returns (loss_cl, loss_syn or None)."""
        pack = self.method.build_pack(training=True, sampler=self.sampler)
        v = self.model.encode_video(batch.video, pack)
        t = self.model.encode_text(batch.text, pack)
        loss_cl = info_nce(v, t, self.cfg.loss.tau)
        loss_syn = self.method.synthesis_loss(pack)
        loss = total_loss(loss_cl, loss_syn, self.cfg.loss)
        if not np.isfinite(loss.item()):
            snapshot = {
                "epoch": epoch,
                "step": step,
                "loss_cl": loss_cl.item(),
                "loss_syn": None if loss_syn is None else loss_syn.item(),
                "gamma": self.sampler.gamma,
                "lr": lr,
                "param_norms": {n: float(np.linalg.norm(p.values)) for n, p in self.optimizer.params.items()},
            }
            logger.error("non-finite training loss", **{k: v for k, v in snapshot.items() if k != "param_norms"})
            raise NumericFailure(f"non-finite loss at epoch {epoch}, step {step}", snapshot)
        if loss.requires_grad:
            self.optimizer.zero_grad()
            backward(loss)
            self.optimizer.step(lr)
            if self.method.basis is not None:
                self.method.basis.renormalize()
        return loss_cl.item(), None if loss_syn is None else loss_syn.item()

    def fit(
        self,
        train: PairedSplit,
        val: Optional[PairedSplit],
        class_texts: TextBatch,
        multilabel: bool,
        log: Optional[EpochLog] = None,
    ) -> TrainResult:
        cfg = self.cfg.train
        store = self.model.store
        backbone = store.names("backbone.")
        result = TrainResult(backbone_checksum_before=store.checksum(backbone))
        T = self.model.config.T
        train = fit_frames(subsample(train, cfg.data_fraction, self.rng.child("data_fraction")), T)
        log = log or EpochLog(None)

        if self.cfg.method is Method.ZERO_SHOT or not self.method.trainable:
            logger.info("no trainable parameters; evaluating only", method=self.cfg.method.value)
            epochs = 0
        else:
            epochs = cfg.epochs

        for epoch in range(epochs):
            lr = lr_at(epoch, cfg)
            self.sampler.gamma = gamma_at(epoch, cfg.epochs, cfg.ramp_fraction)
            if self.method.basis is not None:
                self.method.basis.reset_counts()
            cl, syn = [], []
            for step, idx in enumerate(minibatches(len(train), cfg.batch_size, self.rng.child(f"epoch{epoch}"))):
                loss_cl, loss_syn = self.step(train.take(idx), lr, epoch, step)
                cl.append(loss_cl)
                if loss_syn is not None:
                    syn.append(loss_syn)
                result.step_losses.append(loss_cl + (self.cfg.loss.lam * loss_syn if loss_syn is not None else 0.0))

            record = EpochRecord(epoch=epoch, loss_cl=float(np.mean(cl)) if cl else 0.0, lr=lr)
            if self.synthesizes:
                record.loss_syn = float(np.mean(syn)) if syn else 0.0
                record.gamma = self.sampler.gamma
                record.gram_offdiag_max = self.method.basis.gram_offdiag_max()
                record.selection_histogram = self.method.basis.histogram()
            if val is not None:
                record.metrics = evaluate(self.model, self.method, val, class_texts, multilabel, "both", cfg.batch_size)
            log.write(record)
            result.records.append(record)
            logger.info("epoch finished", **record.model_dump(exclude_none=True, exclude={"selection_histogram"}))

        if val is not None:
            result.metrics = evaluate(self.model, self.method, val, class_texts, multilabel, "both", cfg.batch_size)
        result.backbone_checksum_after = store.checksum(backbone)
        return result
