"""Exception types shared across the engine."""


class ConfigurationError(ValueError):
    """Invalid configuration value (schedule endpoints, population size, ...)."""


class ArgumentError(ValueError):
    """Invalid runtime argument (shape mismatch, missing injected step, ...)."""


class DegenerateInputError(ValueError):
    """Statistic undefined for the given input (constant sequence, n too small)."""


class SelectionError(ValueError):
    """Invalid parent selection (unknown id, duplicate parents, N < 2)."""


class NumericError(RuntimeError):
    """Non-finite value encountered mid-computation; carries the step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FormatError(ValueError):
    """Malformed file (bad magic, truncation, checksum mismatch); carries byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries diagnostics for the failing step."""

    def __init__(self, message: str, epoch: int, batch: int, param_norms: dict[str, float]):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms
