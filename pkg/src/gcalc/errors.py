"""Exception types shared across the package."""


class GCalcError(Exception):
    """Base class for all package errors."""


class ShapeError(GCalcError, ValueError):
    """Operands live on incompatible outcome spaces or grids."""


class ParameterError(GCalcError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigurationError(GCalcError, ValueError):
    """A discretization does not cover the region the computation needs."""


class ExtrapolationError(GCalcError, ValueError):
    """A query point lies outside the stored grid."""


class NumericError(GCalcError, ArithmeticError):
    """A numerical routine failed to converge."""


class SchemaError(GCalcError, ValueError):
    """A JSON payload does not match the expected schema."""
