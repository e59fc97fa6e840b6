"""Exception types shared across the package."""


class CascadeError(Exception):
    """Base class for all package errors."""


class FormatError(CascadeError, ValueError):
    """Malformed file or byte content."""


class ValidationError(CascadeError, ValueError):
    """Data violates a documented invariant."""


class ConfigurationError(CascadeError, ValueError):
    """Incompatible or out-of-range configuration."""


class DomainError(CascadeError, ValueError):
    """Argument outside the mathematical domain of a function."""
