"""Trapped-ion motional heating: simulation, recooling and sideband thermometry."""

from .config import (
    DelaySchedule,
    IonSpecies,
    MG25,
    PhysConstants,
    CONSTANTS,
    TrapLaserConfig,
    lamb_dicke,
    validate_config,
)
from .errors import ConfigError, DataQualityError, FitError, IonHeatError

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS",
    "ConfigError",
    "DataQualityError",
    "DelaySchedule",
    "FitError",
    "IonHeatError",
    "IonSpecies",
    "MG25",
    "PhysConstants",
    "TrapLaserConfig",
    "lamb_dicke",
    "validate_config",
]
