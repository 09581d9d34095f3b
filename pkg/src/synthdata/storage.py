"""On-disk dataset format.

A dataset directory holds:

    manifest.jsonl   line 1: header {"format", "version", "config", "shape",
                     "vocab", "separability", "splits": {name: {"items",
                     "floats", "sha256"}}}; then one record per item
                     {"id", "split", "labels", "tokens", "length", "offset",
                     "count"} where offset/count are in floats within the
                     split's feature file.
    <split>.f32      the split's patch features, little-endian float32,
                     items concatenated in manifest order.
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, List

import numpy as np
import structlog

from ..config import GeneratorConfig
from ..encoders import TextBatch, VideoBatch
from ..errors import ChecksumError, DataError, TruncatedDataError, VersionMismatchError
from .generator import SPLITS, PairedSplit, SyntheticDataset

logger = structlog.get_logger(__name__)

FORMAT = "ego-vpa-synth"
VERSION = 1
MANIFEST = "manifest.jsonl"


def _dumps(record: Dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def save_dataset(dataset: SyntheticDataset, path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = dataset.config
    item_floats = cfg.T * cfg.N_p * cfg.patch_dim

    split_meta = {}
    records: List[str] = []
    for name in SPLITS:
        split = dataset.splits[name]
        blob = np.ascontiguousarray(split.video.patches, dtype="<f4").tobytes()
        (path / f"{name}.f32").write_bytes(blob)
        split_meta[name] = {
            "items": len(split),
            "floats": len(split) * item_floats,
            "sha256": hashlib.sha256(blob).hexdigest(),
        }
        for i in range(len(split)):
            records.append(
                _dumps(
                    {
                        "id": int(split.item_ids[i]),
                        "split": name,
                        "labels": list(split.concepts[i]),
                        "tokens": split.text.token_ids[i].tolist(),
                        "length": int(split.text.lengths[i]),
                        "offset": i * item_floats,
                        "count": item_floats,
                    }
                )
            )

    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": cfg.model_dump(mode="json"),
        "shape": [cfg.T, cfg.N_p, cfg.patch_dim],
        "vocab": dataset.vocab,
        "separability": dataset.separability,
        "splits": split_meta,
    }
    lines = [_dumps(header)] + records
    (path / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("dataset saved", path=str(path), items=len(records))
    return path


def _read_header(path: Path) -> List[str]:
    manifest = path / MANIFEST
    if not manifest.exists():
        raise DataError(f"no dataset manifest at {manifest}", path=str(path))
    lines = manifest.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TruncatedDataError(f"{manifest} is empty", path=str(manifest))
    return lines


def load_dataset(path: Path) -> SyntheticDataset:
    path = Path(path)
    lines = _read_header(path)
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line]
    except json.JSONDecodeError as e:
        raise TruncatedDataError(f"unreadable manifest line: {e}", path=str(path))
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise VersionMismatchError(
            f"dataset format {header.get('format')} v{header.get('version')} unsupported "
            f"(expected {FORMAT} v{VERSION})",
            path=str(path),
        )
    cfg = GeneratorConfig.model_validate(header["config"])
    T, N_p, patch_dim = header["shape"]
    item_floats = T * N_p * patch_dim

    by_split: Dict[str, List[Dict]] = {name: [] for name in SPLITS}
    for record in records:
        by_split[record["split"]].append(record)

    splits: Dict[str, PairedSplit] = {}
    for name in SPLITS:
        meta = header["splits"][name]
        items = by_split[name]
        if len(items) != meta["items"]:
            raise TruncatedDataError(
                f"manifest lists {len(items)} {name} items, header says {meta['items']}", split=name
            )
        blob_path = path / f"{name}.f32"
        if not blob_path.exists():
            raise TruncatedDataError(f"missing feature file {blob_path}", split=name)
        blob = blob_path.read_bytes()
        if len(blob) != meta["floats"] * 4:
            raise TruncatedDataError(
                f"{blob_path} holds {len(blob)} bytes, expected {meta['floats'] * 4}", split=name
            )
        if hashlib.sha256(blob).hexdigest() != meta["sha256"]:
            raise ChecksumError(f"{blob_path} checksum mismatch", split=name)
        for i, record in enumerate(items):
            if record["offset"] != i * item_floats or record["count"] != item_floats:
                raise DataError(f"item {record['id']} offsets disagree with the declared shape", split=name)

        flat = np.frombuffer(blob, dtype="<f4")
        patches = flat.reshape(len(items), T, N_p, patch_dim).astype(np.float32)
        concepts = [tuple(r["labels"]) for r in items]
        labels = np.zeros((len(items), cfg.n_concepts), dtype=np.float64)
        for i, cs in enumerate(concepts):
            labels[i, list(cs)] = 1.0
        token_ids = np.array([r["tokens"] for r in items], dtype=np.int64).reshape(len(items), cfg.N_w + 2)
        text = TextBatch(token_ids, np.array([r["length"] for r in items], dtype=np.int64))
        ids = np.array([r["id"] for r in items], dtype=np.int64)
        splits[name] = PairedSplit(name, VideoBatch(patches, labels), text, concepts, ids)

    return SyntheticDataset(cfg, splits, separability=header.get("separability"), vocab=header["vocab"])


def dataset_checksums(path: Path) -> Dict[str, str]:
    """Per-split feature checksums as recorded in the manifest header."""
    header = json.loads(_read_header(Path(path))[0])
    return {name: meta["sha256"] for name, meta in header["splits"].items()}
