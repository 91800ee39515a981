"""Exception types shared across the package."""


class CorenetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CorenetError):
    """Operand shapes are incompatible."""


class FormatError(CorenetError):
    """A file or manifest violates the expected layout."""


class ChecksumError(FormatError):
    """Binary payload does not match the manifest checksum."""


class ConvergenceError(CorenetError):
    """An iterative solve hit its iteration cap.

    Carries the residual reached so callers can decide whether the partial
    result is usable.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class TrainingDiverged(CorenetError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class ValidationTooSmall(CorenetError):
    """The validation slice cannot cover the required subsample sizes."""
