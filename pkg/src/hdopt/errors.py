"""Exception types shared across the package."""


class HDOptError(Exception):
    """Base class for package errors."""


class InvalidValueError(HDOptError, ValueError):
    """A non-finite number was given where a finite one is required."""


class DomainError(HDOptError, ValueError):
    """A primitive was evaluated outside its domain."""

    def __init__(self, primitive, value, index=None):
        self.primitive = primitive
        self.value = value
        self.index = index
        where = f" at index {index}" if index is not None else ""
        super().__init__(f"{primitive}: argument {value!r}{where} is outside the domain")


class UnorderedError(HDOptError, ValueError):
    """Comparison involving a NaN primal."""


class SizeError(HDOptError, ValueError):
    """A dense second-order computation exceeded the configured size cap."""


class ShapeError(HDOptError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(HDOptError, TypeError):
    """A function violated its calling contract (e.g. non-scalar loss)."""


class ConfigError(HDOptError, ValueError):
    """Invalid experiment or optimizer configuration."""


class DataFormatError(HDOptError, ValueError):
    """Malformed dataset file."""


class OutputError(HDOptError, OSError):
    """Results could not be written."""
