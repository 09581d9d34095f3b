"""Versioned checkpoint container.

Byte layout (all integers little-endian):

    offset 0   8 bytes   magic b"EGVPACKP"
    offset 8   u32       format version (currently 1)
    offset 12  u32       header length H in bytes
    offset 16  H bytes   UTF-8 JSON header:
                           {"config": {...},
                            "arrays": [{"name", "shape", "offset", "count"}, ...],
                            "payload_bytes": int,
                            "sha256": hex digest of the payload}
    offset 16+H          payload: every array as little-endian float64,
                         concatenated in header order; "offset" and "count"
                         are in elements from the payload start.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np
import structlog

from ..errors import ChecksumError, TruncatedDataError, VersionMismatchError

logger = structlog.get_logger(__name__)

MAGIC = b"EGVPACKP"
VERSION = 1
_PREFIX = struct.Struct("<II")


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    index = []
    chunks = []
    offset = 0
    for name, values in checkpoint.arrays.items():
        values = np.ascontiguousarray(values, dtype="<f8")
        index.append({"name": name, "shape": list(values.shape), "offset": offset, "count": int(values.size)})
        chunks.append(values.tobytes())
        offset += values.size
    payload = b"".join(chunks)
    header = json.dumps(
        {
            "config": checkpoint.config,
            "arrays": index,
            "payload_bytes": len(payload),
            "sha256": hashlib.sha256(payload).hexdigest(),
        },
        sort_keys=True,
    ).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_PREFIX.pack(VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    logger.info("checkpoint written", path=str(path), arrays=len(index), bytes=len(payload))
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + _PREFIX.size or blob[: len(MAGIC)] != MAGIC:
        raise TruncatedDataError(f"{path} is not a checkpoint or is truncated", path=str(path))
    version, header_len = _PREFIX.unpack_from(blob, len(MAGIC))
    if version != VERSION:
        raise VersionMismatchError(
            f"checkpoint version {version} unsupported (expected {VERSION})", path=str(path)
        )
    start = len(MAGIC) + _PREFIX.size
    if len(blob) < start + header_len:
        raise TruncatedDataError(f"{path} header is truncated", path=str(path))
    header = json.loads(blob[start : start + header_len].decode("utf-8"))
    payload = blob[start + header_len :]
    if len(payload) != header["payload_bytes"]:
        raise TruncatedDataError(
            f"{path} payload has {len(payload)} bytes, header says {header['payload_bytes']}",
            path=str(path),
        )
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ChecksumError(f"{path} payload checksum mismatch", path=str(path))

    flat = np.frombuffer(payload, dtype="<f8")
    arrays = {
        entry["name"]: flat[entry["offset"] : entry["offset"] + entry["count"]]
        .reshape(entry["shape"])
        .astype(np.float64)
        for entry in header["arrays"]
    }
    return Checkpoint(config=header["config"], arrays=arrays)
