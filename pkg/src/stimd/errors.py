"""Exception types raised across the package."""


class StimdError(Exception):
    """Base class for all package errors."""


class NonMonotonePhase(StimdError, ValueError):
    """A phase sequence decreases by more than the numeric tolerance."""


class DegeneratePhase(StimdError, ValueError):
    """A phase spans less than one full wave."""


class LengthMismatch(StimdError, ValueError):
    """Samples and phase do not share a time grid."""


class InvalidGuess(StimdError, ValueError):
    """An initial phase guess is not a valid phase function."""


class GuessGridMismatch(StimdError, ValueError):
    """An initial phase guess does not match the signal time grid."""


class PhaseCollapse(StimdError, RuntimeError):
    """The monotonicity line search stalled at a zero step."""


class NoDescent(StimdError, RuntimeError):
    """A sphere minimization failed to reduce the objective."""


class NoConvergence(StimdError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class NonPositiveRate(StimdError, ValueError):
    """A modelled phase rate is not strictly positive."""


class UnknownExample(StimdError, KeyError):
    """A synthetic example name is not recognized."""


class ShapeMismatch(StimdError, ValueError):
    """Array shapes are incompatible."""
