"""Exception and warning classes raised across the package."""


class ShapeComplexError(Exception):
    """Base class for all errors raised by shapecomplex."""


# label hierarchy

class InvalidHierarchy(ShapeComplexError, ValueError):
    pass


class CycleDetected(InvalidHierarchy):
    pass


class MultipleParents(InvalidHierarchy):
    pass


class DisconnectedLabel(InvalidHierarchy):
    pass


class DegenerateHierarchy(InvalidHierarchy):
    pass


class UnknownLabel(ShapeComplexError, KeyError):
    pass


# fields and geometry

class ShapeMismatch(ShapeComplexError, ValueError):
    pass


class NonFiniteField(ShapeComplexError, ValueError):
    pass


class NegativeCapacity(ShapeComplexError, ValueError):
    pass


class NegativeSmoothness(NegativeCapacity):
    pass


class VantageOutOfBounds(ShapeComplexError, ValueError):
    pass


class NonPositiveMetric(ShapeComplexError, ValueError):
    pass


class NonBinaryMask(ShapeComplexError, ValueError):
    pass


class InvalidDirectionField(ShapeComplexError, ValueError):
    pass


# problem I/O

class ParseError(ShapeComplexError, ValueError):
    pass


class MissingField(ShapeComplexError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing field: {self.name}"


class UnexpectedField(ShapeComplexError, ValueError):
    pass


class UnknownPhantom(ShapeComplexError, ValueError):
    pass


class BadSize(ShapeComplexError, ValueError):
    pass


# verification

class TooLarge(ShapeComplexError, ValueError):
    pass


class NoFeasibleLabeling(ShapeComplexError, RuntimeError):
    pass


class OracleViolation(ShapeComplexError, AssertionError):
    """The brute-force oracle found a feasible labeling cheaper than its own optimum."""


class NotConverged(RuntimeWarning):
    """Solver hit ``max_iters`` before meeting its tolerance. Results are still returned."""
