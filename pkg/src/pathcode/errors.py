"""Exception types raised across the package."""


class PathCodeError(Exception):
    pass


class CycleDetected(PathCodeError, ValueError):
    def __init__(self, message, arc=None):
        super().__init__(message)
        self.arc = arc


class DuplicateArc(PathCodeError, ValueError):
    pass


class SelfLoop(PathCodeError, ValueError):
    pass


class MissingArcCost(PathCodeError, ValueError):
    pass


class InvalidPath(PathCodeError, ValueError):
    pass


class ZeroProbabilityArc(PathCodeError, ValueError):
    pass


class Infeasible(PathCodeError):
    """Lower capacities (or a fixed flow value) cannot be met."""


class Overflow(PathCodeError, OverflowError):
    """Scaled integer costs would not fit the 64-bit price range."""


class NotConverged(PathCodeError):
    """An iterative method hit its cap; ``tolerance`` reports what was reached."""

    def __init__(self, message, tolerance=None, result=None):
        super().__init__(message)
        self.tolerance = tolerance
        self.result = result


class NonConservativeInput(PathCodeError, ValueError):
    pass


class TooManyPaths(PathCodeError):
    pass


class RankDeficient(PathCodeError):
    pass


class GraphTooSparse(PathCodeError):
    pass


class ImageTooSmall(PathCodeError, ValueError):
    pass
