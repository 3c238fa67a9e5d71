"""Exception hierarchy with machine-readable categories.

Every error raised by the package carries a ``category`` drawn from
``io``, ``format``, ``dimension``, ``numeric`` or ``usage`` so the CLI can
print a one-line, parseable failure message.
"""


class RffdrError(Exception):
    category = "numeric"


class IOFailure(RffdrError):
    category = "io"


class FormatError(RffdrError):
    category = "format"


class DimensionError(RffdrError, ValueError):
    category = "dimension"


class NumericError(RffdrError, ArithmeticError):
    category = "numeric"


class UsageError(RffdrError, ValueError):
    category = "usage"


class ClassTooSmallError(UsageError):
    """A class has too few labeled samples for the requested split."""


class DegenerateDataError(NumericError):
    """Input data has no spread (e.g. all sampled points coincide)."""


class RankDeficiencyError(NumericError):
    """Fewer usable directions than requested components."""
