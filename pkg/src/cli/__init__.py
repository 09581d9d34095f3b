"""Command-line surface and the run/ablation/verification machinery behind it."""

from .ablation import AblationGrid, AblationReport, Cell, CellResult, run_ablation
from .app import build_parser, main
from .manifest import MANIFEST_NAME, RunManifest
from .runs import open_dataset, require_checkpoint, run_evaluation, run_training, with_method
from .verify import SUITES, CheckResult, SuiteReport, run_suite

__all__ = [
    "AblationGrid",
    "AblationReport",
    "Cell",
    "CellResult",
    "run_ablation",
    "build_parser",
    "main",
    "MANIFEST_NAME",
    "RunManifest",
    "open_dataset",
    "require_checkpoint",
    "run_evaluation",
    "run_training",
    "with_method",
    "SUITES",
    "CheckResult",
    "SuiteReport",
    "run_suite",
]
