"""Exception hierarchy. Each family maps onto a CLI exit code."""


class RadtrapError(Exception):
    exit_code = 1


class ConfigError(RadtrapError):
    """Malformed, unknown or unit-inconsistent configuration input."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(RadtrapError):
    """Invalid physical input or experimental data."""

    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidStateError(DataError):
    pass


class InconsistentPointError(DataError):
    pass


class TooFewPointsError(DataError):
    pass


class SolverError(RadtrapError):
    exit_code = 4


class BleachedMediumError(SolverError):
    """The linear intensity profile reaches zero inside the cell."""


class ZeroDecayError(SolverError):
    pass


class SingularSystemError(SolverError):
    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)


class StepSizeError(SolverError):
    pass


class NoBracketError(SolverError):
    pass
