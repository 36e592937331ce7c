"""Exception types shared across the package."""


class QThermoError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(QThermoError):
    """Operands have incompatible or unsupported dimensions."""


class NonHermitianError(QThermoError):
    """An operator that must be Hermitian is not, beyond tolerance."""


class InvalidStateError(QThermoError):
    """A density operator violates trace, positivity, or probability rules."""


class ScheduleError(QThermoError):
    """A drive schedule is malformed (gaps, overlaps, misplaced events)."""


class IntegrationError(QThermoError):
    """The integrator failed (positivity loss, trace drift, step underflow).

    Carries the time at which the failure was detected in ``time``.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class ProtocolError(QThermoError):
    """A protocol-level consistency check failed and the run was aborted."""


class ConfigError(QThermoError):
    """A run configuration is malformed or contains unknown fields."""
