"""Exception types shared across the toolkit."""


class TrajkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidInput(TrajkitError, ValueError):
    """An argument violates an operation's precondition."""


class SchemaError(InvalidInput):
    """A recording file does not match the expected schema."""


class DegenerateNormalization(InvalidInput):
    """A min-max normalization group has max == min."""


class DivergenceError(TrajkitError, RuntimeError):
    """A numerical computation produced non-finite values."""


class TrainingError(TrajkitError, RuntimeError):
    """Training failed (non-finite loss or similar)."""


class CheckpointError(TrajkitError, RuntimeError):
    """A checkpoint file is missing, corrupt, or version-incompatible."""
