"""Multichannel virtual-sensing active noise control simulations."""

from .adaptive import StepSizes, SystemDims
from .errors import ConfigurationError, DivergenceError, SnapshotParseError
from .pipeline import StageConfig, run_pipeline

__version__ = "0.1.0"

__all__ = ["StageConfig", "StepSizes", "SystemDims", "run_pipeline",
           "ConfigurationError", "DivergenceError", "SnapshotParseError", "__version__"]
