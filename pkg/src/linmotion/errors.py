"""Exception types shared across the package."""


class LinMotionError(Exception):
    pass


class ShapeError(LinMotionError, ValueError):
    pass


class ParameterError(LinMotionError, ValueError):
    pass


class FormatError(LinMotionError, ValueError):
    pass


class DegenerateSimilarityError(LinMotionError, ArithmeticError):
    """A linear-attention denominator fell to (or below) the epsilon floor."""

    def __init__(self, row, denominator):
        self.row = row
        self.denominator = denominator
        super().__init__(f"degenerate similarity at row {row}: denominator={denominator!r}")


class SearchExhaustedError(LinMotionError, RuntimeError):
    pass


class NumericalFailureError(LinMotionError, FloatingPointError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class UsageError(LinMotionError, RuntimeError):
    pass


class BudgetError(LinMotionError, MemoryError):
    pass


class ConfigError(LinMotionError, ValueError):
    pass
