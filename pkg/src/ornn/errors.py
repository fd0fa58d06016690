"""Exception hierarchy shared by every module."""


class OrnnError(Exception):
    """Base class for all package errors."""


class DimensionError(OrnnError, ValueError):
    pass


class NumericalError(OrnnError, ArithmeticError):
    pass


class DomainError(OrnnError, ValueError):
    pass


class ParamIndexError(OrnnError, IndexError):
    """Raised for a parameter index outside P1 ∪ P2."""


class EvalError(OrnnError, RuntimeError):
    pass


class EmptySetError(OrnnError, ValueError):
    pass


class StabilityError(OrnnError, ValueError):
    """CFL condition violated."""


class StepSizeError(OrnnError, RuntimeError):
    pass


class ReconstructionError(OrnnError, RuntimeError):
    pass


class ConfigError(OrnnError, ValueError):
    pass
