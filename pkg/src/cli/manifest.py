"""Run manifests: one ``run_manifest.json`` per output directory."""

import json
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from .. import __version__

MANIFEST_NAME = "run_manifest.json"


class RunManifest(BaseModel):
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    code_version: str = __version__
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        """Replace any manifest already in ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / MANIFEST_NAME
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path

    @classmethod
    def read(cls, out_dir: Path) -> "RunManifest":
        return cls.model_validate(json.loads((Path(out_dir) / MANIFEST_NAME).read_text(encoding="utf-8")))
