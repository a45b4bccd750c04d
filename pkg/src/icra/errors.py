"""Exception types raised across the package."""


class IcraError(Exception):
    """Base class for all package errors."""


class DomainError(IcraError, ValueError):
    """An argument lies outside the domain of a function."""


class ContractViolation(IcraError, ValueError):
    """A documented precondition on an input does not hold."""


class DimensionMismatch(IcraError, ValueError):
    pass


class DecompositionError(IcraError, ArithmeticError):
    """A dense factorization failed to converge."""


class EvaluationError(IcraError, ArithmeticError):
    pass


class RankDeficientError(IcraError, ValueError):
    """A dense measurement matrix lacks full row rank."""


class IllConditionedWeights(IcraError, ValueError):
    pass


class ConfigError(IcraError, ValueError):
    pass


class SchemaError(IcraError, ValueError):
    """A results file does not conform to the expected CSV schema."""
