"""Exception types shared across the package."""


class SwelabError(Exception):
    """Base class for all package errors."""


class DomainError(SwelabError, ValueError):
    """An argument lies outside the mathematically valid range."""


class PreconditionError(SwelabError, ValueError):
    """A closed form was requested outside the regime where it holds."""


class ResolutionError(SwelabError):
    """A sample grid does not resolve the requested scales."""


class ResourceError(SwelabError):
    """A request exceeds a configured size cap."""


class ConditioningError(SwelabError):
    """A covariance matrix could not be factorized within the jitter budget."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConfigError(SwelabError):
    """A configuration document is malformed or invalid."""
