"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config -> 1, data/format -> 2,
numeric -> 3.
"""


class DimensionError(ValueError):
    """Operand shapes are incompatible or a tensor is empty."""


class NumericError(ArithmeticError):
    """A numeric computation failed (NaN input, log of nonpositive, divergence)."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class DataFormatError(ValueError):
    """An input file is missing, malformed, or internally inconsistent."""


class ConfigError(ValueError):
    """A configuration value is out of its documented range."""
