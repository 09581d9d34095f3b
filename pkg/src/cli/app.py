"""Command-line surface: gen, train, eval, ablate, verify, params, defaults."""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import structlog
import yaml

from ..config import (
    EncoderConfig,
    Method,
    ModelConfig,
    PromptConfig,
    load_config,
    load_yaml,
    settings,
    with_overrides,
)
from ..errors import EgoVPAError, UsageError
from ..logging_setup import configure_logging
from ..prompting import cmm_weights, count_params, ego_vpa_video_weights
from ..synthdata import dataset_checksums, generate, save_dataset
from ..training import TASKS
from .ablation import AblationGrid, run_ablation
from .manifest import RunManifest
from .runs import open_dataset, run_evaluation, run_training, with_method
from .verify import SUITES, run_suite

logger = structlog.get_logger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so usage mistakes map to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _default_out(command: str) -> Path:
    return Path(settings.output_root) / command


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or _default_out("dataset"))
    dataset = generate(cfg.data)
    save_dataset(dataset, out)
    RunManifest(
        command="gen",
        config=cfg.dump(),
        seed=cfg.data.seed,
        outputs={"dataset": str(out)},
        metrics={"separability": dataset.separability} if dataset.separability is not None else {},
        extra={"sha256": dataset_checksums(out), "sizes": {n: len(s) for n, s in dataset.splits.items()}},
    ).write(out)
    print(json.dumps({"dataset": str(out), "sha256": dataset_checksums(out)}, indent=2))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = with_method(load_config(args.config), args.method)
    if args.phase is not None:
        cfg = with_overrides(cfg, {"train": {"phase": args.phase}})
    dataset = open_dataset(args.dataset)
    out = Path(args.out or _default_out(f"train-{cfg.method.value}"))
    manifest = run_training(cfg, dataset, Path(args.dataset), out, Path(args.init) if args.init else None)
    print(json.dumps(manifest.metrics, indent=2, sort_keys=True))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = open_dataset(args.dataset)
    metrics = run_evaluation(Path(args.checkpoint), dataset, args.split, args.task, args.method)
    if args.out:
        RunManifest(
            command="eval",
            inputs={"checkpoint": str(args.checkpoint), "dataset": str(args.dataset)},
            metrics=metrics,
            extra={"split": args.split, "task": args.task, "method": args.method},
        ).write(Path(args.out))
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    grid = AblationGrid.load(Path(args.grid))
    if args.workers is not None:
        grid.workers = args.workers
    base_raw = load_yaml(Path(args.config)) if args.config else {}
    out = Path(args.out or _default_out("ablate"))
    manifest = run_ablation(grid, base_raw, Path(args.dataset), out)
    print(json.dumps(manifest.extra["ordering"], indent=2))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    reports = [run_suite(suite, args.trials, args.seed) for suite in suites]
    for report in reports:
        for check in report.checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"{status} {check.suite}/{check.name}: {check.value:.3e} (<= {check.threshold:g}, {check.seconds:.1f}s) {check.detail}")
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([r.model_dump() for r in reports], indent=2), encoding="utf-8")
    return 0 if all(r.passed for r in reports) else 1


def _paper_shaped(cfg: ModelConfig) -> ModelConfig:
    return with_overrides(
        cfg,
        {"encoder": EncoderConfig.paper_shaped().model_dump(), "prompting": PromptConfig.paper_shaped().model_dump()},
    )


def cmd_params(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.paper_shaped:
        cfg = _paper_shaped(cfg)
    methods = [args.method] if args.method else [m.value for m in Method]
    print(f"{'method':<10} {'trainable':>12} {'total':>12} {'fraction':>9}")
    for name in methods:
        b = count_params(cfg, name)
        print(f"{b.method:<10} {b.trainable:>12,} {b.total:>12,} {100 * b.fraction:>8.2f}%")
    if args.paper_shaped:
        enc, p = cfg.encoder, cfg.prompting
        ego = count_params(cfg, Method.EGO_VPA).trainable_group_weights
        cmm = count_params(cfg, Method.VOP_C).trainable_group_weights
        counted_ego = ego.get("basis", 0) + ego.get("adapter.video", 0)
        print()
        print(f"{'module':<24} {'counted':>14} {'formula':>14}")
        print(f"{'ego-vpa video side':<24} {counted_ego:>14,} {ego_vpa_video_weights(p.d_f, p.B, enc.d_vid):>14,}")
        print(f"{'cmm':<24} {cmm.get('cmm', 0):>14,} {cmm_weights(p.M_v, enc.T, enc.d_vid):>14,}")
    return 0


def cmd_defaults(args: argparse.Namespace) -> int:
    cfg = ModelConfig()
    if args.paper_shaped:
        cfg = _paper_shaped(cfg)
    print(yaml.safe_dump(cfg.dump(), sort_keys=False), end="")
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ego-vpa", description="Prompt adaptation experiments on a toy dual encoder")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    parser.add_argument("--log-format", choices=("json", "console"), default=None, help="Overrides LOG_FORMAT")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    methods = [m.value for m in Method]

    gen = sub.add_parser("gen", help="Generate a synthetic dataset")
    gen.add_argument("--config", type=Path, default=None)
    gen.add_argument("--out", type=Path, default=None)
    gen.set_defaults(handler=cmd_gen)

    train = sub.add_parser("train", help="Pretrain or adapt one method")
    train.add_argument("--config", type=Path, default=None)
    train.add_argument("--method", choices=methods, default=None)
    train.add_argument("--phase", choices=("pretrain", "adapt"), default=None)
    train.add_argument("--dataset", type=Path, required=True)
    train.add_argument("--init", type=Path, default=None, help="Pretrained checkpoint (adaptation only)")
    train.add_argument("--out", type=Path, default=None)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--dataset", type=Path, required=True)
    evaluate.add_argument("--task", choices=TASKS, default="both")
    evaluate.add_argument("--split", default="adapt_test")
    evaluate.add_argument("--method", choices=methods, default=None, help="Evaluate the checkpoint as this method")
    evaluate.add_argument("--out", type=Path, default=None)
    evaluate.set_defaults(handler=cmd_eval)

    ablate = sub.add_parser("ablate", help="Run an ablation grid")
    ablate.add_argument("--grid", type=Path, required=True)
    ablate.add_argument("--config", type=Path, default=None, help="Base config for every cell")
    ablate.add_argument("--dataset", type=Path, required=True)
    ablate.add_argument("--workers", type=int, default=None)
    ablate.add_argument("--out", type=Path, default=None)
    ablate.set_defaults(handler=cmd_ablate)

    verify = sub.add_parser("verify", help="Run verification suites")
    verify.add_argument("--suite", choices=list(SUITES) + ["all"], default="all")
    verify.add_argument("--trials", type=int, default=0, help="0 uses each suite's default")
    verify.add_argument("--seed", type=int, default=settings.default_seed)
    verify.add_argument("--out", type=Path, default=None)
    verify.set_defaults(handler=cmd_verify)

    params = sub.add_parser("params", help="Parameter accounting")
    params.add_argument("--config", type=Path, default=None)
    params.add_argument("--method", choices=methods, default=None)
    params.add_argument("--paper-shaped", action="store_true")
    params.set_defaults(handler=cmd_params)

    defaults = sub.add_parser("defaults", help="Print the default configuration")
    defaults.add_argument("--paper-shaped", action="store_true")
    defaults.set_defaults(handler=cmd_defaults)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e.message}", file=sys.stderr)
        return e.exit_code
    configure_logging(args.log_level, args.log_format)
    try:
        return args.handler(args)
    except EgoVPAError as e:
        logger.error("command failed", command=args.command, **e.to_dict())
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error("unexpected failure", command=args.command, error=str(e), exc_info=True)
        raise
