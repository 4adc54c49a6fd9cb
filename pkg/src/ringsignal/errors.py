"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class SequencingError(RuntimeError):
    """A time-stepping operation was asked for history it does not have."""


class ConfigurationError(ValueError):
    """Solver or experiment settings are inconsistent."""
