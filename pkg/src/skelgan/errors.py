"""Exception types shared across the package.

CLI exit-code mapping: usage errors -> 1, data errors -> 2, numerical
failures -> 3 (see cli.main).
"""


class SkelganError(Exception):
    """Base class for package errors."""


class ConfigError(SkelganError, ValueError):
    """Invalid configuration value or unknown config key."""


class DataError(SkelganError):
    """Malformed or out-of-contract data (non-finite coords, bad labels...)."""


class ParseError(DataError):
    """Unparseable input file; carries the 1-based line number when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class EmptySequenceError(DataError):
    """A recording produced no frames after preprocessing."""


class AmbiguousBodyError(DataError):
    """Multiple tracked bodies with equal duration; no dominant body."""


class TrainingDiverged(SkelganError, ArithmeticError):
    """A loss became non-finite; carries a diagnostic summary of the step."""

    def __init__(self, message, step=None, diagnostics=None):
        self.step = step
        self.diagnostics = diagnostics or {}
        super().__init__(message)
