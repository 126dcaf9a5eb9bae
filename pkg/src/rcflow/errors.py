"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific class that applies rather than bare ValueError.
"""


class ShapeMismatchError(ValueError):
    """Operands have incompatible extents (structural error)."""


class NumericError(ArithmeticError):
    """A computation produced or would propagate non-finite values."""


class ConfigError(ValueError):
    """An experiment configuration is unreadable, unknown, or out of range."""
