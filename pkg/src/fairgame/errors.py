"""Exception types shared across the library."""


class FairgameError(Exception):
    """Base class for library errors."""


class DomainError(FairgameError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ConsistencyError(DomainError):
    """T*S > R^2: the closed-form altruism level would exceed 1."""


class SchemaError(FairgameError, ValueError):
    """A file or config does not match its expected schema."""


class StaleBufferError(FairgameError, RuntimeError):
    """An update was fed data collected under a different policy version."""
