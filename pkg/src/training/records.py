"""Per-epoch training records, written one JSON object per line."""

from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, Field


class EpochRecord(BaseModel):
    epoch: int
    loss_cl: float
    loss_syn: Optional[float] = None
    gamma: Optional[float] = None
    gram_offdiag_max: Optional[float] = None
    selection_histogram: Optional[Dict[str, int]] = None
    lr: float
    metrics: Dict[str, float] = Field(default_factory=dict)

    def to_line(self) -> str:
        return self.model_dump_json(exclude_none=True)


class EpochLog:
    """Appends records to a JSON-lines file, truncating it on open."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, record: EpochRecord) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(record.to_line() + "\n")
