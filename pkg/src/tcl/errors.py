"""Exception hierarchy. Each CLI-facing class carries its process exit code."""


class TCLError(Exception):
    exit_code = 1


class ConfigError(TCLError, ValueError):
    exit_code = 2


class DataError(TCLError, ValueError):
    exit_code = 3


class CheckpointError(DataError):
    pass


class NumericError(TCLError, ArithmeticError):
    exit_code = 4


class ShapeError(TCLError, ValueError):
    pass


class ContractError(TCLError, ValueError):
    pass
