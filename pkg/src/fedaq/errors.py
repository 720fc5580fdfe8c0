"""Exception hierarchy shared by all fedaq modules."""


class FedAQError(Exception):
    """Base class for library errors."""


class InvalidArgument(FedAQError, ValueError):
    pass


class NumericError(FedAQError, ArithmeticError):
    """A computation produced (or was handed) a non-finite value."""


class FormatError(FedAQError, ValueError):
    """Malformed binary payload or file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InvalidState(FedAQError, RuntimeError):
    pass


class InfeasibleBudget(FedAQError, ValueError):
    """No bit assignment satisfies the energy budget."""


class ConfigError(FedAQError, ValueError):
    """Invalid experiment configuration; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path
