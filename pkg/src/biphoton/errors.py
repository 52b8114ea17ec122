"""Exception hierarchy shared by the library and the command-line front end."""


class BiphotonError(Exception):
    """Base class for all errors raised by :mod:`biphoton`."""


class PoleError(BiphotonError, ValueError):
    """Argument sits on a pole of the Gamma function."""


class ConvergenceError(BiphotonError, ArithmeticError):
    """A series or iteration stopped before reaching its tolerance.

    Attributes
    ----------
    attained : float
        Estimated relative error at the point the iteration gave up.
    """

    def __init__(self, message, attained=float("nan")):
        super().__init__(message)
        self.attained = attained


class DomainError(BiphotonError, ValueError):
    """Index or argument outside the domain of a formula."""


class RangeError(DomainError):
    """Wavelength outside the validity window of a dispersion model."""


class PreconditionError(BiphotonError, ValueError):
    """Inputs do not satisfy the assumptions an operation relies on."""


class TruncationError(DomainError):
    """Mode index outside the configured truncation."""


class AccuracyError(BiphotonError, ArithmeticError):
    """A quadrature or refinement error estimate exceeded its budget.

    Attributes
    ----------
    estimate : float
        The error estimate that triggered the failure.
    """

    def __init__(self, message, estimate=float("nan")):
        super().__init__(message)
        self.estimate = estimate


class GridError(BiphotonError, ValueError):
    """Spectral grid does not cover the support of the state."""


class DegenerateFilterError(BiphotonError, ValueError):
    """A spectral filter removed (almost) the whole state."""


class EmptySubspaceError(BiphotonError, ValueError):
    """Requested subspace carries no amplitude."""


class InfeasibleTargetError(BiphotonError):
    """Target coincidence matrix cannot be reached with the allowed pump.

    Attributes
    ----------
    report : object
        The solver report (coefficients and residuals) at failure.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(BiphotonError, ValueError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
