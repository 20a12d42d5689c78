"""Exception types shared across the toolkit.

The CLI maps these onto stable exit codes: ConfigError -> 2, data errors
(ForestFormatError, AlignmentError, CorpusError, CheckpointError) -> 3,
NumericError -> 4.
"""


class ForestNMTError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(ForestNMTError):
    """Operand shapes do not conform to an operation's signature."""


class ContractError(ForestNMTError):
    """A documented precondition was violated by the caller."""


class NumericError(ForestNMTError):
    """A non-finite value appeared where finite math was required."""


class CapacityError(ForestNMTError):
    """An enumeration would exceed the caller's stated limit."""


class ForestFormatError(ForestNMTError):
    """Malformed forest or tree text. Carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusError(ForestNMTError):
    """Problem with parallel-corpus contents."""


class AlignmentError(CorpusError):
    """Line counts disagree across parallel files."""


class ConfigError(ForestNMTError):
    """Invalid or inconsistent configuration."""


class CheckpointError(ForestNMTError):
    """Unreadable, truncated, or version-incompatible checkpoint file."""
