"""Exception hierarchy shared across the package.

The CLI maps each family to an exit code: configuration problems exit 2,
data problems exit 3 and numerical failures exit 4.
"""


class QcapError(Exception):
    exit_code = 1


class ConfigError(QcapError):
    exit_code = 2


class DataError(QcapError):
    exit_code = 3


class NumericalError(QcapError):
    exit_code = 4


class ParseError(DataError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class SchemaError(DataError):
    pass


class UnsupportedVersion(SchemaError):
    pass


class NotDefiniteOutcome(DataError):
    pass


class ModelKindMismatch(ConfigError):
    pass


class WidthExceeded(DataError):
    pass


class DepthExceeded(DataError):
    pass


class NonCliffordGate(DataError):
    pass


class AlreadyStripped(DataError):
    pass


class MissingRate(DataError):
    pass


class RateOutOfRange(DataError):
    pass


class EmptyTrainingSplit(DataError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
