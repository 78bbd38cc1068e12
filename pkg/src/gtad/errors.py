"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericError(ArithmeticError):
    """A computation produced or would produce non-finite values."""


class GraphError(RuntimeError):
    """Backward pass requested on a tensor detached from the tape."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class UsageError(ValueError):
    """Invalid command line or configuration keys."""

