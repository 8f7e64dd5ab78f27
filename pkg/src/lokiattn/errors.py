"""Exception hierarchy shared across the package.

Errors fall into three groups that the CLI maps onto exit codes and the
service maps onto HTTP statuses:

  usage errors (bad arguments, shape/budget violations)   -> exit 2 / HTTP 400
  data errors (malformed files, degenerate calibrations)  -> exit 3 / HTTP 409
  anything else                                           -> exit 4 / HTTP 500
"""


class LokiError(Exception):
    """Base class for all package errors."""


class UsageError(LokiError):
    """Caller passed arguments that can never be valid."""


class ShapeError(UsageError):
    """Operand dimensions do not line up."""


class BudgetError(UsageError):
    """A k/d budget is outside its legal range."""


class DomainError(UsageError):
    """A scalar parameter is outside its mathematical domain."""


class DataError(LokiError):
    """Input data is readable but unusable."""


class InsufficientDataError(DataError):
    """Too few samples for the requested statistic."""


class DegenerateCalibrationError(DataError):
    """Calibration keys carry no variance; no projection exists."""


class IntegrityError(DataError):
    """A persisted artifact fails its self-consistency checks."""


class ParseError(DataError):
    """A binary file violates its format contract.

    ``field`` names the offending header field or payload section.
    """

    field = "file"

    def __init__(self, message, field=None):
        super().__init__(message)
        if field is not None:
            self.field = field


class MagicError(ParseError):
    field = "magic"


class VersionError(ParseError):
    field = "version"


class DtypeError(ParseError):
    field = "dtype"


class StageError(ParseError):
    field = "rotary_stage"


class TruncationError(ParseError):
    field = "payload"


class NonFiniteError(ParseError):
    field = "data"
