"""Exception hierarchy shared by all stages.

Errors are grouped by the CLI exit code they map to: configuration (2),
data (3), numerical degeneracy (4). I/O failures surface as ``OSError`` (5).
"""


class NewsBTError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(NewsBTError, ValueError):
    exit_code = 2


class DataError(NewsBTError, ValueError):
    exit_code = 3


class NumericalError(NewsBTError, ArithmeticError):
    exit_code = 4


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DuplicateKeyError(DataError):
    pass


class OutOfRangeError(DataError):
    pass


class FormatError(DataError):
    """Bad magic, version or header in a binary file."""


class CorruptionError(DataError):
    """Payload shorter or longer than its header promises."""


class InvariantError(DataError):
    pass


class AlignmentError(DataError):
    pass


class CoverageError(DataError):
    pass


class CausalityError(DataError):
    """A forecast depends on information from its own period or later."""


class EmptyDocumentError(DataError):
    pass


class InsufficientHistoryError(DataError):
    pass


class InsufficientSampleError(DataError):
    pass


class OrderingError(DataError):
    pass


class ShapeError(DataError):
    pass


class ParameterError(ConfigError):
    pass


class RemoteError(NewsBTError, OSError):
    exit_code = 5


class ProtocolError(DataError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class LeverageError(NumericalError):
    pass


class NoValidLambdaError(NumericalError):
    pass


class DegenerateError(NumericalError):
    """Zero variance where a ratio needs a positive denominator."""


class MonthSkipped(NewsBTError):
    """Raised by ``fit_month`` when a cross-section is too thin to fit."""

    def __init__(self, month, reason):
        self.month = month
        self.reason = reason
        super().__init__(f"{month}: {reason}")


class DaySkipped(NewsBTError):
    """Raised by ``decile_assign`` when a day has too few names."""

    def __init__(self, day, reason):
        self.day = day
        self.reason = reason
        super().__init__(f"{day}: {reason}")


class StageError(NewsBTError):
    """Pipeline abort carrying the failing stage name and the root cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 5 if isinstance(cause, OSError) else 1)
        super().__init__(f"stage {stage!r} failed: {cause}")
