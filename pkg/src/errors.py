"""Exception hierarchy shared by the library and the command line."""

from typing import Any, Dict, Optional


class EgoVPAError(Exception):
    """Base error. ``exit_code`` is what the CLI returns for it."""

    exit_code: int = 1
    code: str = "E_GENERIC"

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, **self.context}


class UsageError(EgoVPAError):
    code = "E_USAGE"


class ConfigError(EgoVPAError):
    code = "E_CONFIG"


class DimensionError(EgoVPAError):
    """Shape mismatch between two operands."""

    code = "E_DIMENSION"

    def __init__(self, op: str, left: tuple, right: tuple):
        super().__init__(f"{op}: incompatible shapes {left} and {right}", op=op)
        self.left = left
        self.right = right


class ContractError(EgoVPAError):
    code = "E_CONTRACT"


class DataError(EgoVPAError):
    exit_code = 2
    code = "E_DATA"


class VersionMismatchError(DataError):
    code = "E_VERSION"


class TruncatedDataError(DataError):
    code = "E_TRUNCATED"


class ChecksumError(DataError):
    code = "E_CHECKSUM"


class MissingCheckpointError(DataError):
    code = "E_NO_CHECKPOINT"


class NumericFailure(EgoVPAError):
    """Raised when training produces a non-finite loss."""

    exit_code = 3
    code = "E_NUMERIC"

    def __init__(self, message: str, snapshot: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.snapshot = snapshot or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "snapshot": self.snapshot}
