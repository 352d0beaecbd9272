"""Exception types shared across the package."""


class FormatError(ValueError):
    """Raised when a binary scan/label payload violates the file format."""


class ConfigError(ValueError):
    """Raised when a run configuration is malformed or inconsistent."""


class GenerationError(RuntimeError):
    """Raised when scene generation cannot satisfy placement constraints."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss
