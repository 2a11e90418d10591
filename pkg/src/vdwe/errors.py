"""Exception hierarchy shared by every module of the package."""


class VdweError(Exception):
    """Base class for all errors raised by :mod:`vdwe`."""


class InvalidParametersError(VdweError, ValueError):
    pass


class OutOfDomainError(VdweError, ValueError):
    """Density at or beyond the covolume limit ``1/b`` (or negative)."""


class VacuumStateError(VdweError, ValueError):
    """A quantity needing the specific volume ``v = 1/rho`` was requested at ``rho = 0``.

    The pressure and ``rho c^2`` extend continuously by zero and are carried
    on the exception so callers can still use them.
    """

    def __init__(self, message, p=0.0, rho_c2=0.0):
        super().__init__(message)
        self.p = p
        self.rho_c2 = rho_c2


class CharacteristicInversionError(VdweError, RuntimeError):
    pass


class QuadratureError(VdweError, RuntimeError):
    pass


class DomainTooSmallError(VdweError, ValueError):
    pass


class SimulationError(VdweError, RuntimeError):
    """Base for failures detected while time stepping; carries the failure time."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class BlowUpError(SimulationError):
    pass


class PositivityViolation(SimulationError):
    pass


class BufferContactError(SimulationError):
    pass


class ConfigError(VdweError, ValueError):
    """Invalid configuration; ``violations`` lists every problem found, with line numbers."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
