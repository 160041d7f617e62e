"""Exception types shared across the package."""


class EvopowerError(Exception):
    """Base class for all library errors."""


class GrammarError(EvopowerError):
    """Grammar file could not be parsed or is inconsistent."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DerivationError(EvopowerError):
    """Random derivation failed (e.g. expansion depth cap exceeded)."""


class InvalidGenotypeError(EvopowerError):
    """Gene list cannot be decoded against the grammar."""


class ConfigError(EvopowerError):
    """Configuration file or config object is invalid."""


class DataError(EvopowerError):
    """Dataset file missing, malformed, or inconsistent."""


class MeasurementError(EvopowerError):
    """Power meter misuse or invalid reading."""


class TrainingDivergedError(EvopowerError):
    """Joint loss became non-finite during training."""


class EvaluationError(EvopowerError):
    """Model evaluation called with unusable inputs."""


class CheckpointError(EvopowerError):
    """Run checkpoint is missing, corrupt, or from a different setup."""


class EnumerationCapError(EvopowerError):
    """Exact-mode test requested beyond the enumeration cap."""
