"""Exception hierarchy shared by all modules."""


class MarginBoundError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MarginBoundError, ValueError):
    """Invalid construction parameters (bounds, node counts, exponents, ...)."""


class ShapeError(MarginBoundError, ValueError):
    """Arrays or fields that do not live on the same grid."""


class PositivityError(MarginBoundError, ValueError):
    """A density that must be strictly positive is not."""


class AlignmentError(MarginBoundError, ValueError):
    """Grid cells are not aligned with the unit blocks of a block density."""


class DomainError(MarginBoundError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InputError(MarginBoundError, ValueError):
    """Problem data that cannot admit a solution (e.g. marginal mass mismatch)."""
