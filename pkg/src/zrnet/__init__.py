"""Joint image restoration and Zernike wavefront estimation from phase-diverse images."""

from .errors import (CheckpointError, ConfigError, DataError, DomainError, ShapeError, TapeError,
                     TopologyError, TrainingDiverged, ZRNetError)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "DataError", "DomainError", "ShapeError", "TapeError",
    "TopologyError", "TrainingDiverged", "ZRNetError", "__version__",
]
