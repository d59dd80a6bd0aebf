"""Simulation of a four-transmon HHL linear-system solver with tomography."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    FitError,
    HHLSimError,
    RankDeficientError,
    SimulationError,
)
