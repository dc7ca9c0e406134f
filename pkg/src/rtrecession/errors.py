"""Exception hierarchy shared by every module.

``ValidationError`` covers bad inputs and configuration (CLI exit code 1);
everything else is a runtime failure (exit code 2).
"""


class ValidationError(ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DomainError(ValueError):
    """Input outside the mathematical domain of a transform."""


class DegenerateError(ValueError):
    """Input too degenerate to compute the requested quantity."""


class InsufficientDataError(ValueError):
    pass


class TuningError(RuntimeError):
    pass


class DataNotFound(FileNotFoundError):
    pass


def add_context(exc: BaseException, prefix: str) -> BaseException:
    """Prefix ``exc``'s message in place, keeping its type."""
    if exc.args:
        exc.args = (f"{prefix}: {exc.args[0]}",) + tuple(exc.args[1:])
    else:
        exc.args = (prefix,)
    return exc
