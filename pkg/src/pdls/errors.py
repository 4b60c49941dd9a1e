"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Operand shape does not match an operator or problem contract."""


class InvalidInputError(ValueError):
    """Input contains NaN/Inf or has an incompatible dtype."""


class ParameterError(ValueError):
    """A scalar parameter is outside its documented range."""


class ConstructionError(ValueError):
    """An object cannot be built because a required identity fails."""


class ResourceError(RuntimeError):
    """A request would exceed a documented size guard."""


class LineSearchError(RuntimeError):
    """A backtracking search hit its trial budget without accepting."""


class ComparisonError(ValueError):
    """Run outputs cannot be compared (mismatched experiments)."""
