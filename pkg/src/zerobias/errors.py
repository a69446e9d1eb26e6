"""Exception hierarchy shared by all modules."""


class ZeroBiasError(Exception):
    """Base class for library errors."""


class DomainError(ZeroBiasError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedError(ZeroBiasError, NotImplementedError):
    """The requested construction is not implemented for this law or function."""


class ValidationError(ZeroBiasError, ValueError):
    """User-supplied evaluators are inconsistent with their declaration."""


class OrderError(ZeroBiasError, ValueError):
    """A derivative or expansion order exceeds what the object supports."""


class PreconditionError(ZeroBiasError, ValueError):
    """Moment or regularity requirements of an operation are not met."""


class NumericalError(ZeroBiasError, ArithmeticError):
    """Quadrature failed to converge or two evaluation routes disagree."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CapacityError(ZeroBiasError, RuntimeError):
    """Exact enumeration would exceed the configured atom cap."""


class ContractError(ZeroBiasError, ValueError):
    """Inputs violate an independence or usage contract."""


class DegenerateFitError(ZeroBiasError, ValueError):
    """Too few usable points remain for a log-log regression."""
