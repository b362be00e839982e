"""Shared exception types.

Every module raises one of these so the CLI can map failures onto its
exit-code contract (2 input, 3 numeric, 4 shape, 5 verification).
"""


class DalignError(Exception):
    """Base class for all library errors."""


class ShapeError(DalignError, ValueError):
    """Operands have incompatible shapes or dimensions."""


class ParameterError(DalignError, ValueError):
    """A scalar argument or configuration value is out of range."""


class DomainError(DalignError, ValueError):
    """An input value lies outside the mathematical domain of the operation."""


class NumericError(DalignError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ParseError(DalignError, ValueError):
    """A data or configuration file violates its schema."""
