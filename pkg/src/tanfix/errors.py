"""Exception types shared across the package."""


class TanfixError(Exception):
    """Base class for all package errors."""


class ConfigError(TanfixError, ValueError):
    """Invalid or inconsistent configuration (bad key, value, or pairing)."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DomainError(TanfixError, ValueError):
    """A point lies outside the set an operation is defined on.

    ``step`` and ``mapping_index`` are filled in when the violation happens
    inside an iteration run.
    """

    def __init__(self, message, step=None, mapping_index=None):
        self.step = step
        self.mapping_index = mapping_index
        parts = []
        if step is not None:
            parts.append(f"step {step}")
        if mapping_index is not None:
            parts.append(f"mapping {mapping_index}")
        if parts:
            message = f"{', '.join(parts)}: {message}"
        super().__init__(message)
