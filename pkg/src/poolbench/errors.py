class PoolbenchError(Exception):
    exit_code = 1


class ConfigError(PoolbenchError, ValueError):
    exit_code = 2


class DataError(PoolbenchError, ValueError):
    exit_code = 3


class NumericalError(PoolbenchError, ArithmeticError):
    exit_code = 4
