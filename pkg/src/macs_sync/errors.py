from __future__ import annotations

"""Exception types shared across the simulator."""


class MacsError(Exception):
    pass


class InfeasibleDegreeSequence(MacsError):
    pass


class MalformedEdgeList(MacsError):
    pass


class BudgetExceeded(MacsError):
    pass


class EpisodeFinished(MacsError):
    pass


class Unreachable(MacsError):
    pass


class ServiceUnavailable(MacsError):
    pass


class ShapeMismatch(MacsError):
    pass


class InsufficientReplay(MacsError):
    pass


class MissingCheckpoint(MacsError):
    pass


class ConfigError(MacsError):
    """Raised for unreadable or invalid scenario configs."""


class UnknownKey(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = ":".join(str(x) for x in (f"line {line}" if line else None, field) if x)
        super().__init__(f"{where}: {message}" if where else message)
