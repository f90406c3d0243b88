"""Exception types raised by the library.

Numeric failures (``NumericError`` subclasses) map to CLI exit code 3;
argument problems (``ArgumentError`` subclasses) map to exit code 2.
"""


class RobustProcureError(Exception):
    """Base class for every library error."""


class ArgumentError(RobustProcureError, ValueError):
    """Invalid input parameters."""


class SigmaOutOfRange(ArgumentError):
    pass


class QueryOutOfRange(ArgumentError):
    """A tabulated function was queried outside its knots."""


class NumericError(RobustProcureError):
    pass


class ZeroWelfare(NumericError):
    """Efficient surplus is zero, so any ratio against it is undefined."""


class UnboundedWelfare(NumericError):
    """u - c is still increasing at the top of the search window."""


class DivergentWelfare(NumericError):
    """Expected welfare under a power prior is infinite."""


class DegenerateKink(NumericError):
    pass


class NonSmooth(NumericError):
    pass


class ZeroMarginalCost(NumericError):
    pass


class EmptyDomain(NumericError):
    pass


class NonPositiveDelta(NumericError):
    """Curvature lower bound is not positive; no positive guarantee exists."""


class InversionFailure(NumericError):
    pass


class CertificateMismatch(NumericError):
    """A worst-case witness did not reproduce its ratio on re-evaluation."""
