"""Exception hierarchy shared by every module of the package."""


class ObstacleWalkError(Exception):
    """Base class for all package errors."""


class DomainError(ObstacleWalkError, ValueError):
    """A tilt parameter lies outside the interval where the cumulant is finite."""


class SlopeError(ObstacleWalkError, ValueError):
    """A requested mean slope is not attainable by tilting the step law."""


class MassLossError(ObstacleWalkError, RuntimeError):
    """The truncated height grid lost more weight than the configured tolerance."""


class DegenerateError(ObstacleWalkError, ValueError):
    """A geometric construction is undefined for the given parameters."""


class NotCoupledError(ObstacleWalkError, RuntimeError):
    """The sandwich replicas of a Gibbs chain did not merge within budget."""


class InsufficientData(ObstacleWalkError, ValueError):
    """Too few valid points for a regression."""


class ConfigError(ObstacleWalkError, ValueError):
    """Malformed or invalid run configuration."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
