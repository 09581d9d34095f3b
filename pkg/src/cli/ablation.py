"""Config-driven ablation grids: method comparison, feature ablation and hyperparameter sweeps.

A grid file is YAML (``include`` supported) with these optional keys:

    base:     overrides applied to every cell
    pretrain: overrides for the shared pretraining runs
    preset:   one of table2, table3, figure4 (or ``presets`` as a list)
    cells:    {name: overrides} for hand-written cells
    sweeps:   {axis: [values]} with axis in B, k, k_ratio, K, data_fraction, frames
    workers:  parallel cell processes (defaults to the service setting)

Pretraining checkpoints are cached under ``<out>/pretrain/<key>/`` per
backbone shape, so every cell with the same encoder reuses one backbone.
"""

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import structlog
from pydantic import BaseModel, Field, ValidationError

from ..config import ModelConfig, build_config, deep_merge, load_yaml, settings
from ..errors import ConfigError, EgoVPAError
from ..logging_setup import configure_logging
from ..prompting import count_params
from ..synthdata import SyntheticDataset, dataset_checksums
from .manifest import RunManifest
from .runs import CHECKPOINT_NAME, open_dataset, run_training

logger = structlog.get_logger(__name__)

RESULTS_NAME = "results.jsonl"
REPORT_NAME = "report.json"

TABLE2_METHODS = ("zero-shot", "full", "bias", "tpt", "vpt", "vop", "vop-c", "vop-fc", "ego-vpa")

# name: (method, cross_modal, orth_constraint, query_mode)
TABLE3_ROWS: Dict[str, Tuple[str, Optional[bool], Optional[bool], Optional[str]]] = {
    "m1": ("vop-fc", None, None, None),
    "m2": ("ego-vpa", False, False, "sampled"),
    "m3": ("ego-vpa", False, True, "sampled"),
    "m4": ("ego-vpa", True, False, "sampled"),
    "m5": ("ego-vpa", True, True, "sampled"),
    "m6": ("ego-vpa", True, False, "topk"),
    "m7": ("ego-vpa", True, True, "topk"),
}
TABLE3_COLUMNS = ("cell", "prompt_generation", "cross_modality", "orthogonality", "query")

FIGURE4_SWEEPS: Dict[str, Optional[List[float]]] = {
    "B": [4, 6, 8, 10, 12],
    "k_ratio": [0.2, 0.4, 0.6, 0.8, 1.0],
    "K": None,
    "data_fraction": [0.1, 0.2, 0.5, 1.0],
    "frames": None,
}
PRESETS = ("table2", "table3", "figure4")


class Cell(BaseModel):
    name: str
    group: str
    axis: Optional[str] = None
    value: Optional[float] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    flags: Dict[str, str] = Field(default_factory=dict)


class CellResult(BaseModel):
    name: str
    group: str
    axis: Optional[str] = None
    value: Optional[float] = None
    method: str
    flags: Dict[str, str] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
    trainable: int = 0
    fraction: float = 0.0
    run_dir: str = ""


class AblationReport(BaseModel):
    metric: str
    ordering: List[Dict[str, Any]] = Field(default_factory=list)
    comparisons: Dict[str, float] = Field(default_factory=dict)


class AblationGrid(BaseModel):
    base: Dict[str, Any] = Field(default_factory=dict)
    pretrain: Dict[str, Any] = Field(default_factory=dict)
    presets: List[str] = Field(default_factory=list)
    cells: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    sweeps: Dict[str, List[float]] = Field(default_factory=dict)
    workers: Optional[int] = None

    @classmethod
    def from_raw(cls, raw: Dict[str, Any]) -> "AblationGrid":
        raw = dict(raw)
        preset = raw.pop("preset", None)
        if preset is not None:
            raw["presets"] = list(raw.get("presets", [])) + [preset]
        try:
            grid = cls.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or "grid"
            raise ConfigError(f"invalid grid field '{field}': {first['msg']}", field=field)
        unknown = [p for p in grid.presets if p not in PRESETS]
        if unknown:
            raise ConfigError(f"unknown ablation preset '{unknown[0]}'", field="preset")
        return grid

    @classmethod
    def load(cls, path: Path) -> "AblationGrid":
        return cls.from_raw(load_yaml(Path(path)))


def table3_cells() -> List[Cell]:
    cells = []
    for name, (method, cross, orth, query) in TABLE3_ROWS.items():
        overrides: Dict[str, Any] = {"train": {"method": method}}
        if method == "ego-vpa":
            overrides["prompting"] = {"cross_modal": cross, "orth_constraint": orth, "query_mode": query}
            flags = {
                "prompt_generation": "PS",
                "cross_modality": "yes" if cross else "",
                "orthogonality": "yes" if orth else "",
                "query": "sampled" if query == "sampled" else "top-k",
            }
        else:
            flags = {"prompt_generation": "CMM", "cross_modality": "", "orthogonality": "N/A", "query": "N/A"}
        cells.append(Cell(name=name, group="table3", overrides=overrides, flags=flags))
    return cells


def table2_cells() -> List[Cell]:
    return [Cell(name=m, group="table2", overrides={"train": {"method": m}}) for m in TABLE2_METHODS]


def sweep_overrides(axis: str, value: float, base: ModelConfig) -> Dict[str, Any]:
    if axis == "B":
        return {"prompting": {"B": int(value)}}
    if axis == "k":
        return {"prompting": {"k": int(value)}}
    if axis == "k_ratio":
        return {"prompting": {"k": max(1, int(round(value * base.prompting.B)))}}
    if axis == "K":
        return {"prompting": {"K": int(value)}}
    if axis == "data_fraction":
        return {"train": {"data_fraction": float(value)}}
    if axis == "frames":
        return {"encoder": {"T": int(value)}}
    raise ConfigError(f"unknown sweep axis '{axis}'", field=f"sweeps.{axis}")


def sweep_cells(sweeps: Dict[str, Optional[List[float]]], base: ModelConfig, data_T: int) -> List[Cell]:
    cells = []
    for axis, values in sweeps.items():
        if values is None and axis == "K":
            values = list(range(base.encoder.L + 1))
        elif values is None and axis == "frames":
            values = [t for t in (1, 2, 4, 8, 16) if t <= data_T]
        for value in values or []:
            label = f"{value:g}" if isinstance(value, float) else str(value)
            cells.append(
                Cell(
                    name=f"{axis}={label}",
                    group="figure4",
                    axis=axis,
                    value=float(value),
                    overrides=deep_merge({"train": {"method": "ego-vpa"}}, sweep_overrides(axis, value, base)),
                )
            )
    return cells


def expand_cells(grid: AblationGrid, base: ModelConfig, data_T: int) -> List[Cell]:
    cells: List[Cell] = []
    for preset in grid.presets:
        if preset == "table2":
            cells.extend(table2_cells())
        elif preset == "table3":
            cells.extend(table3_cells())
        else:
            cells.extend(sweep_cells(FIGURE4_SWEEPS, base, data_T))
    cells.extend(Cell(name=name, group="cells", overrides=overrides) for name, overrides in grid.cells.items())
    cells.extend(sweep_cells(dict(grid.sweeps), base, data_T))
    names = [c.name for c in cells]
    duplicate = next((n for n in names if names.count(n) > 1), None)
    if duplicate is not None:
        raise ConfigError(f"duplicate ablation cell '{duplicate}'", field="cells")
    if not cells:
        raise ConfigError("ablation grid has no cells", field="cells")
    return cells


def cell_config(base_raw: Dict[str, Any], cell: Cell) -> ModelConfig:
    merged = deep_merge(base_raw, cell.overrides)
    if merged.get("train", {}).get("method") != "full":
        merged = deep_merge(merged, {"train": {"phase": "adapt"}})
    try:
        return build_config(merged)
    except ConfigError as e:
        raise ConfigError(f"cell '{cell.name}': {e.message}", field=e.context.get("field"))


def pretrain_config(base_raw: Dict[str, Any], pretrain_raw: Dict[str, Any], cfg: ModelConfig) -> ModelConfig:
    """The shared pretraining run for ``cfg``'s backbone shape."""
    raw = deep_merge(base_raw, {"encoder": cfg.encoder.model_dump()})
    raw = deep_merge(raw, {"train": {"phase": "pretrain", "method": "full", "data_fraction": 1.0}})
    return build_config(deep_merge(raw, pretrain_raw))


def pretrain_key(cfg: ModelConfig, checksums: Dict[str, str]) -> str:
    dump = cfg.dump()
    blob = json.dumps(
        {"encoder": dump["encoder"], "train": dump["train"], "loss": dump["loss"], "data": checksums},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def ensure_pretrained(cfg: ModelConfig, dataset: SyntheticDataset, dataset_path: Path, root: Path) -> Path:
    key = pretrain_key(cfg, dataset_checksums(dataset_path))
    run_dir = root / "pretrain" / key
    ckpt = run_dir / CHECKPOINT_NAME
    if ckpt.is_file():
        logger.info("pretrained backbone reused", key=key)
        return ckpt
    run_training(cfg, dataset, dataset_path, run_dir)
    return ckpt


def run_cell(job: Dict[str, Any]) -> Dict[str, Any]:
    """Train and evaluate one cell; runs in a worker process when the pool is used."""
    cell = Cell.model_validate(job["cell"])
    cfg = build_config(job["config"])
    dataset_path = Path(job["dataset"])
    manifest = run_training(cfg, open_dataset(dataset_path), dataset_path, Path(job["out"]), Path(job["init"]))
    breakdown = count_params(cfg)
    return CellResult(
        name=cell.name,
        group=cell.group,
        axis=cell.axis,
        value=cell.value,
        method=cfg.method.value,
        flags=cell.flags,
        metrics=manifest.metrics,
        trainable=breakdown.trainable,
        fraction=breakdown.fraction,
        run_dir=job["out"],
    ).model_dump()


def _cell_dir(name: str) -> str:
    return name.replace("=", "_").replace("/", "_")


def _write_csv(path: Path, header: List[str], rows: List[List[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_tables(results: List[CellResult], out_dir: Path, metric: str) -> Dict[str, str]:
    """table3.csv for the feature ablation and one figure4_<axis>.csv per sweep axis."""
    written: Dict[str, str] = {}
    table3 = [r for r in results if r.group == "table3"]
    if table3:
        path = out_dir / "table3.csv"
        rows = [[r.name] + [r.flags.get(c, "") for c in TABLE3_COLUMNS[1:]] + [r.metrics.get(metric, "")] for r in table3]
        _write_csv(path, list(TABLE3_COLUMNS) + [metric], rows)
        written["table3"] = str(path)
    axes: Dict[str, List[CellResult]] = {}
    for r in results:
        if r.axis is not None:
            axes.setdefault(r.axis, []).append(r)
    for axis, rows in axes.items():
        path = out_dir / f"figure4_{axis}.csv"
        keys = sorted({k for r in rows for k in r.metrics})
        _write_csv(
            path,
            ["value", "trainable"] + keys,
            [[r.value, r.trainable] + [r.metrics.get(k, "") for k in keys] for r in sorted(rows, key=lambda r: r.value)],
        )
        written[f"figure4_{axis}"] = str(path)
    return written


def build_report(results: List[CellResult], metric: str) -> AblationReport:
    pool = [r for r in results if r.group == "table2"] or results
    ranked = sorted(pool, key=lambda r: (-r.metrics.get(metric, float("-inf")), r.name))
    report = AblationReport(
        metric=metric,
        ordering=[
            {"cell": r.name, "method": r.method, metric: r.metrics.get(metric), "fraction": r.fraction} for r in ranked
        ],
    )
    by_method = {r.method: r.metrics.get(metric) for r in pool}
    ours = by_method.get("ego-vpa")
    if ours is not None:
        for other in ("zero-shot", "tpt", "vpt", "vop-fc", "full"):
            if by_method.get(other) is not None:
                report.comparisons[f"ego-vpa_minus_{other}"] = ours - by_method[other]
    return report


def run_ablation(grid: AblationGrid, base_raw: Dict[str, Any], dataset_path: Path, out_dir: Path) -> RunManifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = open_dataset(dataset_path)
    base_raw = deep_merge(base_raw, grid.base)
    base = build_config(base_raw)
    cells = expand_cells(grid, base, dataset.config.T)
    configs = [cell_config(base_raw, cell) for cell in cells]
    for cfg in configs:
        cfg.check_data(dataset.config)

    # pretraining runs first and in order, so workers never race on the cache
    inits = [
        ensure_pretrained(pretrain_config(base_raw, grid.pretrain, cfg), dataset, dataset_path, out_dir)
        for cfg in configs
    ]
    jobs = [
        {
            "cell": cell.model_dump(),
            "config": cfg.dump(),
            "dataset": str(dataset_path),
            "init": str(init),
            "out": str(out_dir / "cells" / _cell_dir(cell.name)),
        }
        for cell, cfg, init in zip(cells, configs, inits)
    ]
    workers = grid.workers if grid.workers is not None else settings.ablation_workers
    logger.info("ablation started", cells=len(jobs), workers=workers)

    raw_results: Dict[str, Dict[str, Any]] = {}
    if workers <= 1:
        for job in jobs:
            raw_results[job["cell"]["name"]] = run_cell(job)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=configure_logging) as ex:
            futures = {ex.submit(run_cell, job): job["cell"]["name"] for job in jobs}
            for future in as_completed(futures):
                name = futures[future]
                try:
                    raw_results[name] = future.result()
                except EgoVPAError as e:
                    logger.error("ablation cell failed", cell=name, **e.to_dict())
                    raise
                logger.info("ablation cell finished", cell=name, done=len(raw_results), total=len(jobs))

    results = [CellResult.model_validate(raw_results[cell.name]) for cell in cells]
    with open(out_dir / RESULTS_NAME, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(r.model_dump_json() + "\n")

    metric = "test_mAP" if dataset.multilabel else "test_top1"
    outputs = {"results": str(out_dir / RESULTS_NAME), "report": str(out_dir / REPORT_NAME)}
    outputs.update(write_tables(results, out_dir, metric))
    report = build_report(results, metric)
    (out_dir / REPORT_NAME).write_text(report.model_dump_json(indent=2), encoding="utf-8")

    manifest = RunManifest(
        command="ablate",
        config=base.dump(),
        seed=base.train.seed,
        inputs={"dataset": str(dataset_path)},
        outputs=outputs,
        metrics={f"{r.name}.{metric}": r.metrics[metric] for r in results if metric in r.metrics},
        extra={"grid": grid.model_dump(), "ordering": [row["cell"] for row in report.ordering]},
    )
    manifest.write(out_dir)
    return manifest
