"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class LusoforgeError(Exception):
    pass


class UsageError(LusoforgeError):
    """Bad command line or configuration."""


class DataError(LusoforgeError):
    """Malformed, missing, or degenerate input data."""


class NumericalError(LusoforgeError):
    """Run aborted on a numerical fault (NaN loss/gradient, etc.)."""


class ShapeError(LusoforgeError, ValueError):
    """Tensor shape mismatch; message names both shapes."""


class ContractError(LusoforgeError, RuntimeError):
    """An API was used outside its stated contract (e.g. backward on a
    non-scalar, or re-running backward on a consumed graph)."""


class EmptyLossError(DataError):
    """A loss was requested over zero contributing positions."""
