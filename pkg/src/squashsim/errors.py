"""Exception hierarchy shared by every squashsim module."""


class SquashSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SquashSimError, ValueError):
    """Invalid system configuration, scenario, or address."""


class SimulationError(SquashSimError, RuntimeError):
    """Fatal internal error: the model was driven incorrectly (a bug, not a user error)."""


class DivergenceError(SimulationError):
    """The event-count watchdog tripped; the model is probably livelocked."""


class UndefinedMetric(SquashSimError, ZeroDivisionError):
    """The cache-change metric has no squashed instructions to normalise by."""


class SchemaError(SquashSimError, ValueError):
    """A trace or scenario file does not carry the fields an analysis needs."""


class IoError(SquashSimError, OSError):
    """Writing an artifact failed."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason
