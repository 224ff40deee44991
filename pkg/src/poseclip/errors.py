"""Exception types shared across the package."""


class PoseClipError(Exception):
    """Base class for all poseclip errors."""


class ShapeError(PoseClipError):
    """Tensor dimensions do not fit the requested operation."""


class ContractError(PoseClipError):
    """An operation was called outside its stated preconditions."""


class ConfigError(PoseClipError):
    """Invalid configuration value or combination."""


class ParseError(PoseClipError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SplitError(PoseClipError):
    """A dataset split cannot be formed as requested."""
