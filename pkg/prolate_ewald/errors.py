"""Exception and warning classes shared by every prolate_ewald module."""


class ProlateEwaldError(Exception):
    """Base class for all errors raised by prolate_ewald."""


class DomainError(ProlateEwaldError, ValueError):
    """An argument lies outside the domain of the function."""


class OutOfBandError(DomainError):
    """A PSWF quantity was requested beyond its bandlimit, where no closed form exists."""


class ConvergenceError(ProlateEwaldError, RuntimeError):
    """An iteration did not converge within its retry budget."""


class ConfigurationError(ProlateEwaldError, ValueError):
    """A solver or run configuration is invalid."""


class PlanConsistencyError(ConfigurationError):
    """Split, window and grid of an EwaldPlan do not fit together."""


class FitExtrapolationWarning(UserWarning):
    """A curve fit was evaluated outside the range it was fitted on."""


class MollifierPositivityWarning(UserWarning):
    """The tabulated mollifier is not strictly positive on its support."""


class StaleCacheWarning(UserWarning):
    """A cached reference did not match its checksum and was recomputed."""
