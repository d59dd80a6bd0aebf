"""Exception hierarchy shared across the package.

The CLI maps the three top-level families onto exit codes
(config -> 1, simulation -> 2, fit -> 3).
"""


class HHLSimError(Exception):
    """Base class for all package errors."""


class ConfigError(HHLSimError):
    pass


class SimulationError(HHLSimError):
    pass


class DimensionError(SimulationError, ValueError):
    pass


class NotUnitaryError(SimulationError, ValueError):
    pass


class ImpossibleOutcomeError(SimulationError):
    """Postselected branch has (numerically) zero probability."""


class LeakageError(SimulationError):
    pass


class ConnectivityError(SimulationError, ValueError):
    """Two-qubit gate requested between sites that are not chain neighbours."""


class InvalidInstanceError(SimulationError, ValueError):
    pass


class ScheduleError(SimulationError, ValueError):
    pass


class FitError(HHLSimError):
    pass


class RankDeficientError(FitError):
    pass


class MiscalibrationError(FitError):
    pass
