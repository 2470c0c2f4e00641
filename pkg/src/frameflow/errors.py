"""Exception and warning types shared across the package."""


class FrameflowError(Exception):
    """Base class for numeric and domain errors raised by the library."""


class DecompositionError(FrameflowError):
    pass


class GradingError(FrameflowError):
    pass


class ModelError(FrameflowError):
    pass


class NotUnitVector(FrameflowError):
    pass


class PingPongError(FrameflowError):
    pass


class InsufficientGenerators(FrameflowError):
    pass


class NotInLimitChart(FrameflowError):
    pass


class PoleError(FrameflowError):
    pass


class DepthError(FrameflowError):
    pass


class DomainError(FrameflowError):
    pass


class ShapeError(FrameflowError):
    pass


class ConvergenceError(FrameflowError):
    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class BracketError(FrameflowError):
    pass


class NormalizationError(FrameflowError):
    pass


class PreconditionError(FrameflowError):
    pass


class InfeasibleError(FrameflowError):
    def __init__(self, message, inequality=None):
        super().__init__(message)
        self.inequality = inequality


class CoverError(FrameflowError):
    pass


class ResolutionError(FrameflowError):
    pass


class DominationFailure(FrameflowError):
    pass


class NoWitness(FrameflowError):
    pass


class ToleranceWarning(UserWarning):
    """A rank decision fell inside the ambiguity band around the threshold."""


class NoiseFloorWarning(UserWarning):
    """A norm sequence hit the floating-point noise floor before the fit window ended."""


class NonMixingWarning(UserWarning):
    """The roof function is (numerically) constant, so the suspension cannot mix."""
