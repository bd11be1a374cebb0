"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage mistakes exit 1, bad input
data exits 2, anything else exits 3.
"""


class InstructMineError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(InstructMineError):
    """The caller asked for something incoherent (bad flags, bad combinations)."""


class DataError(InstructMineError):
    """Input data violates a documented contract (format, range, coverage)."""
