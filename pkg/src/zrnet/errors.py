"""Exception types shared across the package."""


class ZRNetError(Exception):
    """Base class for all package errors."""


class DomainError(ZRNetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(ZRNetError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ZRNetError, ValueError):
    """A configuration value is invalid or unsupported."""


class TopologyError(ZRNetError, ValueError):
    """A graph edge set violates the requirements of a layer."""


class TapeError(ZRNetError, RuntimeError):
    """Misuse of the autodiff tape (non-scalar loss, double backward, ...)."""


class CheckpointError(ZRNetError):
    """A checkpoint is malformed or incompatible with the requested config."""


class TrainingDiverged(ZRNetError, FloatingPointError):
    """A loss became non-finite during training."""

    def __init__(self, iteration, breakdown):
        self.iteration = iteration
        self.breakdown = breakdown
        parts = ", ".join(f"{k}={v!r}" for k, v in breakdown.items())
        super().__init__(f"non-finite loss at iteration {iteration}: {parts}")


class DataError(ZRNetError, ValueError):
    """An input image or dataset file is missing, unreadable or empty."""
