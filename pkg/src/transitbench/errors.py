"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class TransitBenchError(Exception):
    exit_code = 1


class ConfigError(TransitBenchError, ValueError):
    exit_code = 2


class DataError(TransitBenchError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    pass


class NumericError(TransitBenchError, ArithmeticError):
    exit_code = 4


class ConvergenceWarning(UserWarning):
    pass


class SeparationWarning(UserWarning):
    pass
