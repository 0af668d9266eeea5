"""Exception hierarchy shared by all subcommands.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
"""


class ClusternerError(Exception):
    pass


class DataError(ClusternerError, ValueError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class TagSchemeError(DataError):
    def __init__(self, message, sentence=None, position=None):
        self.sentence = sentence
        self.position = position
        if sentence is not None:
            message = f"sentence {sentence}, token {position}: {message}"
        super().__init__(message)


class NumericalError(ClusternerError, ArithmeticError):
    """Optimizer or inference produced non-finite values."""
