"""Exception types. The CLI maps each one to a distinct exit code."""


class LTPDCError(ValueError):
    """Base class for invalid inputs to any ltpdc routine."""


class ParseError(LTPDCError):
    """Input file or config could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConsistencyError(LTPDCError):
    """Inputs parse individually but disagree with each other (class count, labels)."""


class InfeasibleError(LTPDCError):
    """A requested long-tailed profile cannot be realized from the available data."""
