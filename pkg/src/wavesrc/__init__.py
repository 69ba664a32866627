"""Recovering the spatial source of a wave equation from lateral Cauchy data."""
from .config import RunConfig
from .errors import ConfigError, ModelError, NumericalError, StageError, WavesrcError
from .grid import SpaceTimeGrid, SpatialGrid2D, TimeGrid, delinearize, linearize
from .pipeline import run_pipeline, run_sweep
from .sources import SourceSpec

__all__ = [
    "RunConfig",
    "ConfigError",
    "ModelError",
    "NumericalError",
    "StageError",
    "WavesrcError",
    "SpaceTimeGrid",
    "SpatialGrid2D",
    "TimeGrid",
    "delinearize",
    "linearize",
    "run_pipeline",
    "run_sweep",
    "SourceSpec",
]
__version__ = "0.1.0"
