"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class CausalityError(RuntimeError):
    """An encoder tried to read a received signal that does not exist yet."""


class SchemeError(RuntimeError):
    """A coding scheme produced an unusable value (e.g. non-finite output)."""


class ConfigError(ValueError):
    """An experiment manifest is malformed or inconsistent."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
