"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigurationError` and :class:`UsageError` to exit
code 1 and :class:`NumericalError` (including :class:`FitError`) to exit
code 2.
"""


class ConveyorError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ConveyorError, ValueError):
    """Invalid grid, parameter or run configuration."""


class UsageError(ConveyorError, ValueError):
    """An operation was called with arguments it does not support."""


class DomainRangeError(ConveyorError, ValueError):
    """A time or acceleration lies outside the supported range."""


class NumericalError(ConveyorError, RuntimeError):
    """A numerical procedure did not converge or produced unusable output."""


class FitError(NumericalError):
    """A least-squares fit had insufficient or invalid data."""


class NoBoundStateError(NumericalError):
    """Imaginary-time relaxation ended at a non-negative energy."""


class ResonanceError(NumericalError):
    """Sinusoidal drive at the trap frequency; the displacement series diverges."""
