"""Exception types shared across the package."""


class GumBenchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GumBenchError, ValueError):
    """An argument violates a documented precondition (shape, finiteness, range)."""


class InvalidStateError(GumBenchError, RuntimeError):
    """An optimizer state is inconsistent with the requested operation."""


class InvalidProjectorError(GumBenchError, ValueError):
    """A projection matrix does not have orthonormal columns."""


class ConfigError(GumBenchError, ValueError):
    """An experiment configuration is malformed or internally inconsistent."""
