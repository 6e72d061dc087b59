"""Exception hierarchy shared across the package."""


class DesignError(Exception):
    """Base class for all package errors."""


class SingularError(DesignError, ArithmeticError):
    """A matrix expected to be positive definite failed factorization."""


class ParseError(DesignError, ValueError):
    """Malformed basis-function text."""

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at position {position}: {text!r}"
        super().__init__(message)


class RangeError(DesignError, ValueError):
    """A variable index lies outside 1..p."""


class ModelError(DesignError, ValueError):
    """A response model violates one of its invariants."""


class CapacityError(DesignError, ValueError):
    """A requested size exceeds a configured guard."""


class InfeasibleModel(DesignError):
    """No design on the candidate set yields a nonsingular information matrix."""


class NotApplicable(DesignError):
    """The premise of an invariance check does not hold for this model."""


class ConfigError(DesignError, ValueError):
    """Configuration file violates the schema; ``path`` names the field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
