"""Exception hierarchy shared by all modules."""


class EmdenLabError(Exception):
    """Base class for every error raised by emdenlab."""


class NumericalFailure(EmdenLabError):
    """A solver did not reach its contract (CLI exit code 1)."""


class UsageError(EmdenLabError, ValueError):
    """Invalid input or configuration (CLI exit code 2)."""


# geometry
class InvalidSpacing(UsageError):
    pass


class EmptyInterior(UsageError):
    pass


class OutOfDomain(UsageError):
    pass


# elliptic
class GridMismatch(UsageError):
    pass


class NoConvergence(NumericalFailure):
    pass


# lane_emden
class NonPositive(NumericalFailure):
    pass


class NewtonDiverged(NumericalFailure):
    pass


class JacobianSolveFailed(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


# radial oracle
class NoZeroFound(NumericalFailure):
    pass


# bubbles
class BallExitsDomain(UsageError):
    pass


class ScaleUnderflow(NumericalFailure):
    """The concentration scale is below what the grid can resolve."""


# greenfn
class SourceTooCloseToBoundary(UsageError):
    pass


class PointsTooClose(UsageError):
    pass


class TestPointTooClose(UsageError):
    __test__ = False


class NotConverged(NumericalFailure):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(UsageError):
    pass
