"""Exception types raised across the package."""


class OpflowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(OpflowError, ValueError):
    pass


class NonRealResult(OpflowError, ValueError):
    pass


class SingularOperator(OpflowError, ArithmeticError):
    pass


class InvalidPartition(OpflowError, ValueError):
    pass


class NegativeCoefficient(OpflowError, ValueError):
    pass


class SingularCovariance(OpflowError, ArithmeticError):
    pass


class EmptyBatch(OpflowError, ValueError):
    pass


class NonFiniteLoss(OpflowError, FloatingPointError):
    pass


class NonFiniteState(OpflowError, FloatingPointError):
    pass


class MaskScheduleMismatch(OpflowError, ValueError):
    pass


class NoSolution(OpflowError, ValueError):
    pass


class NotDiagonal(OpflowError, TypeError):
    pass


class NotNormalizable(OpflowError, ValueError):
    pass


class DisconnectedMaze(OpflowError, ValueError):
    pass


class NoValidPath(OpflowError, RuntimeError):
    pass


class ConfigError(OpflowError, ValueError):
    pass
