"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class GPFewShotError(Exception):
    """Base class for all errors raised by gpfewshot."""


class DomainError(GPFewShotError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class NumericalError(GPFewShotError, ArithmeticError):
    """A factorization or numerical routine failed after all fallbacks."""


class InconsistentObservationError(GPFewShotError, ValueError):
    """A (near-)deterministic arm was observed at a value contradicting the posterior."""


class ExhaustedError(GPFewShotError, RuntimeError):
    """No admissible arm is left to select."""


class ResourceError(GPFewShotError, MemoryError):
    """A requested construction exceeds the dense-algebra budget."""


class ContractError(GPFewShotError, ValueError):
    """An operation was called in a way its contract forbids."""


class ConfigError(GPFewShotError, ValueError):
    """A run configuration document is malformed."""

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)
