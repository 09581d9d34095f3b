"""Training and evaluation runs as the CLI and the ablation harness execute them."""

from pathlib import Path
from typing import Dict, Optional

import structlog

from ..config import Method, ModelConfig, build_config, with_overrides
from ..encoders import Checkpoint, load_checkpoint, save_checkpoint
from ..errors import DataError, MissingCheckpointError
from ..prompting import count_params, parse_method
from ..synthdata import SyntheticDataset, dataset_checksums, load_dataset
from ..training import EpochLog, Trainer, build_model, evaluate, to_checkpoint
from .manifest import RunManifest

logger = structlog.get_logger(__name__)

CHECKPOINT_NAME = "model.ckpt"
EPOCH_LOG_NAME = "epochs.jsonl"
TRAIN_SPLIT = {"pretrain": "pretrain", "adapt": "adapt_train"}
VAL_SPLIT = "adapt_val"
TEST_SPLIT = "adapt_test"


def open_dataset(path: Path) -> SyntheticDataset:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"dataset directory not found: {path}", path=str(path))
    return load_dataset(path)


def require_checkpoint(path: Optional[Path]) -> Checkpoint:
    if path is None or not Path(path).is_file():
        raise MissingCheckpointError(
            f"no pretrained checkpoint at {path}; run `train` with --phase pretrain first",
            path=str(path),
        )
    return load_checkpoint(Path(path))


def with_method(cfg: ModelConfig, method: Optional[str]) -> ModelConfig:
    """``cfg`` switched to ``method``; non-full methods always run as adaptation."""
    if method is None:
        return cfg
    method = parse_method(method)
    overrides: Dict = {"train": {"method": method.value}}
    if method is not Method.FULL:
        overrides["train"]["phase"] = "adapt"
    return with_overrides(cfg, overrides)


def run_training(
    cfg: ModelConfig,
    dataset: SyntheticDataset,
    dataset_path: Path,
    out_dir: Path,
    init_path: Optional[Path] = None,
) -> RunManifest:
    """Pretrain or adapt, writing checkpoint, epoch log and manifest into ``out_dir``."""
    cfg.check_data(dataset.config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phase = cfg.train.phase
    init = None if phase == "pretrain" else require_checkpoint(init_path)

    model, method = build_model(cfg, init)
    logger.info("run started", phase=phase, method=cfg.method.value, out=str(out_dir))
    trainer = Trainer(cfg, model, method)
    log_path = out_dir / EPOCH_LOG_NAME
    result = trainer.fit(
        dataset.splits[TRAIN_SPLIT[phase]],
        dataset.splits[VAL_SPLIT],
        dataset.class_texts(),
        dataset.multilabel,
        EpochLog(log_path),
    )
    test = evaluate(
        model, method, dataset.splits[TEST_SPLIT], dataset.class_texts(), dataset.multilabel,
        "both", cfg.train.batch_size,
    )

    outputs = {"epoch_log": str(log_path)}
    if cfg.method is not Method.ZERO_SHOT:
        ckpt = save_checkpoint(out_dir / CHECKPOINT_NAME, to_checkpoint(cfg, model, method))
        outputs["checkpoint"] = str(ckpt)

    breakdown = count_params(cfg)
    manifest = RunManifest(
        command="train",
        config=cfg.dump(),
        seed=cfg.train.seed,
        inputs={"dataset": str(dataset_path), **({"init": str(init_path)} if init is not None else {})},
        outputs=outputs,
        metrics={**{f"val_{k}": v for k, v in result.metrics.items()}, **{f"test_{k}": v for k, v in test.items()}},
        extra={
            "dataset_sha256": dataset_checksums(Path(dataset_path)),
            "trainable": breakdown.trainable,
            "trainable_fraction": breakdown.fraction,
            "backbone_unchanged": result.backbone_checksum_before == result.backbone_checksum_after,
        },
    )
    manifest.write(out_dir)
    logger.info("run finished", out=str(out_dir), **manifest.metrics)
    return manifest


def run_evaluation(
    checkpoint_path: Path,
    dataset: SyntheticDataset,
    split: str,
    task: str,
    method: Optional[str] = None,
) -> Dict[str, float]:
    checkpoint = require_checkpoint(checkpoint_path)
    cfg = with_method(build_config(checkpoint.config), method)
    cfg.check_data(dataset.config)
    if split not in dataset.splits:
        raise DataError(f"dataset has no split '{split}'", split=split)
    model, prompting = build_model(cfg, checkpoint)
    return evaluate(
        model, prompting, dataset.splits[split], dataset.class_texts(), dataset.multilabel, task, cfg.train.batch_size
    )
