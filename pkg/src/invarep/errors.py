"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad field value, dimension mismatch, or an
    unsupported objective/dataset combination."""


class DataFormatError(ValueError):
    """A data file could not be parsed (bad magic, malformed row, ...)."""


class CheckpointError(RuntimeError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite during optimization."""
