"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operands do not have the shapes an operation requires."""


class UnsupportedDimensionError(ValueError):
    """A dimension exceeds the enumeration caps this package accepts."""


class CompositionBoundError(ValueError):
    """An outer generator violates the sandwich bounds of a composition."""


class InfeasiblePointError(ValueError):
    """The base point violates the constraint system."""


class SchemaError(ValueError):
    """A problem or report document does not match its schema."""
