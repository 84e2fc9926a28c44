"""Exception hierarchy shared by every dmra module."""


class DMRAError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(DMRAError):
    """Invalid model input: wrong dimensions, out-of-box allocations, bad parameters."""


class SolverError(DMRAError):
    """Per-slot optimization failed (e.g. cost derivative not monotone)."""


class ContractError(DMRAError):
    """A documented precondition was violated by the caller."""


class InfeasibleError(DMRAError):
    """The arrival rate exceeds what the resource box can ever serve."""


class ConfigError(DMRAError):
    """Configuration file could not be parsed or validated."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.reason = message
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
