"""Second-order forward-mode automatic differentiation with hyper-dual numbers,
the FoMoH optimizer family and baselines."""
from . import hyperdual, models, ops, optimizers, reverse
from .errors import (
    ConfigError,
    ContractError,
    DataFormatError,
    DomainError,
    HDOptError,
    InvalidValueError,
    OutputError,
    ShapeError,
    SizeError,
    UnorderedError,
)

__version__ = "0.1.0"
