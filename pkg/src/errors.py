"""
Exception types for NAVAR training, scoring and data handling.
"""


class NavarError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(NavarError, ValueError):
    """Raised when tensor or dataset shapes disagree."""


class GraphContractError(NavarError, RuntimeError):
    """Raised when the autodiff graph is used against its contract."""


class ConfigError(NavarError, ValueError):
    """Raised for invalid hyperparameters, presets or config files."""


class DatasetTooShortError(NavarError, ValueError):
    """Raised when a replicate has no more time steps than the max lag."""


class DivergenceError(NavarError, RuntimeError):
    """Raised when the training loss becomes non-finite or explodes."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class CheckpointParseError(NavarError, ValueError):
    """Raised when a checkpoint file is truncated or malformed."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class CheckpointVersionError(NavarError, ValueError):
    """Raised when a checkpoint does not match the expected format or kind."""


class CsvParseError(NavarError, ValueError):
    """Raised for ragged rows or non-numeric cells in a CSV file."""

    def __init__(self, message, line, column=None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{message} ({where})")


class ConstantVariableError(NavarError, ValueError):
    """Raised when a variable has zero variance on the normalization range."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"variable '{name}' is constant on the fit range")


class UndefinedAurocError(NavarError, ValueError):
    """Raised when the label set has no positives or no negatives."""


class UnsupportedAnalysisError(NavarError, ValueError):
    """Raised when an analysis does not apply to the model's backbone."""


class GenerationError(NavarError, RuntimeError):
    """Raised when a synthetic generator cannot produce a valid system."""
